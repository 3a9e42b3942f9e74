use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use person_cluster::evaluation::{evaluate, pairwise_scores, PairwiseScores};
use person_cluster::gallery::{self, coappearance_stats, CapacityBin, Gallery};
use person_cluster::hnm::{self, MatchMode};
use person_cluster::hpm::{run_hpm, HpmState, IterationTrace, Termination};
use person_cluster::objective::{
    hard_negative_set, loss_from_features, numerical_gradient, relative_error,
};
use person_cluster::store::FeatureStore;
use person_cluster::synth::{self, SynthConfig};
use person_cluster::{ClusteringConfig, InstanceRef};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{ClusterArgs, ClusteringArgs, EvalArgs, LossCheckArgs, StatsArgs, SynthArgs};
use crate::Failure;

type Outcome = Result<(), Failure>;

fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::runtime(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn load(path: &Path) -> Result<(Gallery, FeatureStore), Failure> {
    let g = gallery::load_gallery(path)
        .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    let store = FeatureStore::from_gallery(&g)?;
    Ok((g, store))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn synth(a: SynthArgs) -> Outcome {
    let mut c: SynthConfig = read_toml(a.config.as_deref())?;
    set(&mut c.seed, a.seed);
    set(&mut c.n_identities, a.n_identities);
    set(&mut c.n_images, a.n_images);
    set(&mut c.persons_per_image, a.persons_per_image);
    set(&mut c.group_size, a.group_size);
    set(&mut c.p_group_cohesion, a.p_group_cohesion);
    set(&mut c.noise_sigma, a.noise_sigma);
    set(&mut c.dim, a.dim);
    set(&mut c.n_cameras, a.n_cameras);
    c.orthogonal |= a.orthogonal;
    set(&mut c.unlabeled_fraction, a.unlabeled_fraction);
    set(&mut c.view_sigma, a.view_sigma);
    set(&mut c.lookalike_size, a.lookalike_size);
    set(&mut c.lookalike_similarity, a.lookalike_similarity);

    let g = synth::generate(&c)?;
    match &a.output {
        Some(path) => gallery::save_gallery(path, &g)?,
        None => gallery::write_gallery(io::stdout().lock(), &g)?,
    }
    eprintln!(
        "synth: {} images, {} persons, {} identities, dim {} (seed {})",
        g.num_images(),
        g.num_instances(),
        gallery::identities(&g).len(),
        g.dim(),
        c.seed
    );
    Ok(())
}

fn clustering_config(a: &ClusteringArgs) -> Result<(ClusteringConfig, MatchMode), Failure> {
    let mut c: ClusteringConfig = read_toml(a.config.as_deref())?;
    set(&mut c.delta, a.delta);
    set(&mut c.beta, a.beta);
    set(&mut c.hpm_max_iters, a.hpm_max_iters);
    if a.no_hpm {
        c.hpm_max_iters = 0;
    }
    c.validate()?;
    let mode = if a.no_hnm {
        MatchMode::Threshold
    } else {
        MatchMode::Hnm
    };
    Ok((c, mode))
}

fn cluster_store(
    store: &FeatureStore,
    a: &ClusteringArgs,
) -> Result<(ClusteringConfig, HpmState), Failure> {
    let (config, mode) = clustering_config(a)?;
    let state = run_hpm(store, config.hpm(mode))?;
    Ok((config, state))
}

#[derive(Serialize)]
struct GallerySummary {
    images: usize,
    persons: usize,
    labeled: bool,
}

impl GallerySummary {
    fn of(g: &Gallery) -> Self {
        Self {
            images: g.num_images(),
            persons: g.num_instances(),
            labeled: g.has_labels(),
        }
    }
}

#[derive(Serialize)]
struct ClusterReport<'a> {
    gallery: GallerySummary,
    config: person_cluster::hpm::HpmConfig,
    iterations: usize,
    termination: Termination,
    num_links: usize,
    trace: &'a [IterationTrace],
    pairwise: Option<PairwiseScores>,
}

pub fn cluster(a: ClusterArgs) -> Outcome {
    let (g, store) = load(&a.gallery)?;
    let (_, state) = cluster_store(&store, &a.clustering)?;
    if let Some(path) = &a.output {
        hnm::write_positive_sets(File::create(path)?, &state.sets)?;
    }
    let pairwise = g.has_labels().then(|| pairwise_scores(&g, &state.sets));
    print_json(&ClusterReport {
        gallery: GallerySummary::of(&g),
        config: state.config,
        iterations: state.iteration,
        termination: state.termination,
        num_links: state.sets.num_links(),
        trace: &state.trace,
        pairwise,
    })?;
    let f1 = pairwise
        .map(|p| format!(", pairwise F1 {:.4}", p.f1))
        .unwrap_or_default();
    eprintln!(
        "cluster: {} links after {} iteration(s), {:?}{f1}",
        state.sets.num_links(),
        state.iteration,
        state.termination
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Outcome {
    if a.k.contains(&0) {
        return Err(Failure::usage("Top-k cut-offs must be at least 1"));
    }
    let ks: Vec<usize> =
        a.k.iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
    let (g, store) = load(&a.gallery)?;
    let report = evaluate(&g, &store, a.protocol, &ks)?;
    print_json(&report)?;
    let top1 = report
        .top_k
        .get("1")
        .map(|v| format!(", Top-1 {v:.4}"))
        .unwrap_or_default();
    eprintln!(
        "eval ({}): mAP {:.4}{top1} over {} queries ({} skipped)",
        report.protocol, report.map, report.num_queries, report.skipped
    );
    Ok(())
}

#[derive(Serialize)]
struct StatsBin {
    capacity: usize,
    #[serde(flatten)]
    counts: CapacityBin,
    multiple_fraction: f64,
}

#[derive(Serialize)]
struct StatsReport {
    total_pairs: usize,
    bins: Vec<StatsBin>,
}

pub fn stats(a: StatsArgs) -> Outcome {
    let g = gallery::load_gallery(&a.gallery)
        .map_err(|e| Failure::runtime(format!("{}: {e}", a.gallery.display())))?;
    let stats = coappearance_stats(&g)?;
    let report = StatsReport {
        total_pairs: stats.total_pairs(),
        bins: stats
            .bins
            .iter()
            .map(|(&capacity, &counts)| StatsBin {
                capacity,
                counts,
                multiple_fraction: counts.multiple_fraction(),
            })
            .collect(),
    };
    print_json(&report)?;
    eprintln!(
        "stats: {} positive image pairs in {} capacity bins",
        report.total_pairs,
        report.bins.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct AnchorLoss {
    anchor: InstanceRef,
    positives: usize,
    negatives: usize,
    loss: f64,
    gradient_relative_error: f64,
}

#[derive(Serialize)]
struct GradientCheck {
    step: f64,
    tolerance: f64,
    max_relative_error: Option<f64>,
    passed: bool,
}

#[derive(Serialize)]
struct LossReport {
    tau: f64,
    hard_neg_ratio: f64,
    iterations: usize,
    anchors: Vec<AnchorLoss>,
    skipped: usize,
    mean_loss: Option<f64>,
    gradient_check: GradientCheck,
}

pub fn loss_check(a: LossCheckArgs) -> Outcome {
    let (g, store) = load(&a.gallery)?;
    let (mut config, state) = cluster_store(&store, &a.clustering)?;
    set(&mut config.tau, a.tau);
    set(&mut config.hard_neg_ratio, a.hard_neg_ratio);
    let loss = config.loss();
    loss.validate()?;
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(Failure::usage(format!("step must be > 0, got {}", a.step)));
    }

    let anchors = (0..store.len())
        .into_par_iter()
        .filter(|&slot| !state.sets.slot_members(slot).is_empty())
        .map(|slot| {
            let positives = state.sets.slot_members(slot);
            let negatives = hard_negative_set(slot, positives, &store, loss.hard_neg_ratio)?;
            let c: Vec<&[f64]> = positives
                .iter()
                .map(|&s| store.feature(s))
                .collect::<Result<_, _>>()?;
            let d: Vec<&[f64]> = negatives
                .iter()
                .map(|&s| store.feature(s))
                .collect::<Result<_, _>>()?;
            // The anchor's own observation plays the extracted feature.
            let query = &g
                .get(store.instance_ref(slot))
                .expect("store mirrors gallery")
                .feature;
            let result = loss_from_features(query, &c, &d, loss.tau)?;
            let numeric = numerical_gradient(query, &c, &d, loss.tau, a.step)?;
            Ok(AnchorLoss {
                anchor: store.instance_ref(slot).clone(),
                positives: c.len(),
                negatives: d.len(),
                loss: result.value,
                gradient_relative_error: relative_error(&result.gradient, &numeric),
            })
        })
        .collect::<Result<Vec<_>, person_cluster::Error>>()?;

    let max_err = anchors
        .iter()
        .map(|x| x.gradient_relative_error)
        .reduce(f64::max);
    let mean_loss = (!anchors.is_empty())
        .then(|| anchors.iter().map(|x| x.loss).sum::<f64>() / anchors.len() as f64);
    let passed = max_err.is_none_or(|e| e <= a.tolerance);
    let report = LossReport {
        tau: loss.tau,
        hard_neg_ratio: loss.hard_neg_ratio,
        iterations: state.iteration,
        skipped: store.len() - anchors.len(),
        anchors,
        mean_loss,
        gradient_check: GradientCheck {
            step: a.step,
            tolerance: a.tolerance,
            max_relative_error: max_err,
            passed,
        },
    };
    print_json(&report)?;
    eprintln!(
        "loss-check: {} anchors (skipped {} without positives), mean loss {}, max gradient relative error {}",
        report.anchors.len(),
        report.skipped,
        mean_loss.map_or("n/a".into(), |v| format!("{v:.6}")),
        max_err.map_or("n/a".into(), |v| format!("{v:.3e}")),
    );
    if !passed {
        return Err(Failure::runtime(format!(
            "gradient check failed: relative error above {}",
            a.tolerance
        )));
    }
    Ok(())
}
