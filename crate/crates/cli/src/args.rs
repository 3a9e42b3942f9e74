use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use person_cluster::evaluation::Protocol;

#[derive(Debug, Parser)]
#[command(
    name = "person-cluster",
    version,
    about = "Context-aware unsupervised clustering for person search"
)]
pub struct Cli {
    /// Worker threads for parallel matching and evaluation [default: all cores]
    #[arg(long, global = true, env = "PERSON_CLUSTER_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic gallery (JSON Lines)
    Synth(SynthArgs),
    /// Mine positive sets with hard negative and hard positive mining
    Cluster(ClusterArgs),
    /// Rank every labeled person against its protocol gallery; report mAP and Top-k
    Eval(EvalArgs),
    /// Histogram of image pairs sharing one versus several identities, by matching capacity
    Stats(StatsArgs),
    /// Per-anchor re-identification loss and a finite-difference gradient check
    LossCheck(LossCheckArgs),
}

/// Parses `min..max`, `min..=max` or a single count.
fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => Ok((parse(a)?, parse(b.trim_start_matches('='))?)),
        None => parse(s).map(|n| (n, n)),
    }
}

/// Generator settings. Flags override values from `--config`; anything set
/// in neither takes the default shown.
#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with generator settings (same names as the flags, in snake_case)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output gallery file [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of distinct identities [default: 20]
    #[arg(long)]
    pub n_identities: Option<usize>,
    /// Number of scene images [default: 30]
    #[arg(long)]
    pub n_images: Option<usize>,
    /// Persons per image as MIN..MAX, inclusive [default: 1..4]
    #[arg(long, value_parser = parse_range)]
    pub persons_per_image: Option<(usize, usize)>,
    /// Identities per co-appearance group [default: 3]
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Probability that an image draws its persons from one group [default: 0.8]
    #[arg(long)]
    pub p_group_cohesion: Option<f64>,
    /// Root-mean-square length of the per-observation noise [default: 0.1]
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Embedding dimension [default: 128]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Cameras, assigned to images round-robin [default: 2]
    #[arg(long)]
    pub n_cameras: Option<usize>,
    /// Use mutually orthogonal identity prototypes [default: off]
    #[arg(long)]
    pub orthogonal: bool,
    /// Probability that a person is emitted without a label [default: 0]
    #[arg(long)]
    pub unlabeled_fraction: Option<f64>,
    /// Root-mean-square length of the fixed per-(identity, camera) offset [default: 0]
    #[arg(long)]
    pub view_sigma: Option<f64>,
    /// Identities per look-alike family; 1 disables families [default: 1]
    #[arg(long)]
    pub lookalike_size: Option<usize>,
    /// Expected cosine between prototypes of one look-alike family [default: 0]
    #[arg(long)]
    pub lookalike_similarity: Option<f64>,
}

/// Clustering hyper-parameters shared by `cluster` and `loss-check`.
#[derive(Debug, Args)]
pub struct ClusteringArgs {
    /// TOML file with clustering settings (delta, beta, tau, hpm_max_iters, hard_neg_ratio, dim, seed)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Similarity threshold for match candidates, in (-1, 1) [default: 0.6]
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Weight of the co-appearance similarity shift [default: 0.1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Maximum hard positive mining rounds after the first matching [default: 3]
    #[arg(long)]
    pub hpm_max_iters: Option<usize>,
    /// Skip hard positive mining (threshold + winner-take-all + backward check only)
    #[arg(long)]
    pub no_hpm: bool,
    /// Keep every candidate above the threshold: no winner-take-all, no backward check
    #[arg(long)]
    pub no_hnm: bool,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Gallery file (JSON Lines)
    pub gallery: PathBuf,
    #[command(flatten)]
    pub clustering: ClusteringArgs,
    /// Write positive sets (JSON Lines, one anchor per line) to this file
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gallery file (JSON Lines)
    pub gallery: PathBuf,
    /// Gallery protocol: regular or multi-view
    #[arg(long, default_value_t = Protocol::Regular)]
    pub protocol: Protocol,
    /// Comma-separated Top-k cut-offs
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Gallery file (JSON Lines) with labels
    pub gallery: PathBuf,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    /// Gallery file (JSON Lines)
    pub gallery: PathBuf,
    #[command(flatten)]
    pub clustering: ClusteringArgs,
    /// Softmax temperature [default: 0.1]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Fraction of non-positives used as hard negatives, in (0, 1] [default: 0.01]
    #[arg(long)]
    pub hard_neg_ratio: Option<f64>,
    /// Central-difference step of the gradient check
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest acceptable relative gradient error
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}
