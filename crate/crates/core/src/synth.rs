//! Seeded synthetic galleries with controllable identity structure.
//!
//! Generation is a pure function of [`SynthConfig`]. The random stream is
//! `ChaCha8Rng::seed_from_u64(seed)` (rand_chacha 0.9) with normal draws from
//! `rand_distr::StandardNormal` (rand_distr 0.5); both versions are pinned
//! so a seed yields the same gallery on every platform. The draw order is:
//!
//! 1. one prototype per identity: `dim` normal draws, Gram-Schmidt against
//!    earlier prototypes when `orthogonal` is set, then normalization;
//! 2. when `lookalike_size > 1`, one unit center per look-alike family
//!    (`dim` normal draws each);
//! 3. when `view_sigma > 0`, per identity and per camera the `dim` draws of
//!    its view offset;
//! 4. per image, in order: the person count, the cohesion coin, the group
//!    (cohesive images only), the identity sample, then per person the noise
//!    draws (skipped when `noise_sigma == 0`) and the unlabeled coin (skipped
//!    when `unlabeled_fraction == 0`).
//!
//! Identities are partitioned into consecutive groups of `group_size`. A
//! cohesive image draws its persons from one group first and tops up from
//! the remaining identities; other images draw uniformly. Cameras are
//! assigned round-robin. Each observation is
//!
//! ```text
//! normalize(view(identity, camera) + noise_sigma / sqrt(dim) * N(0, I))
//! ```
//!
//! so `noise_sigma` is the root-mean-square length of the perturbation
//! relative to the unit prototype, independent of `dim`.
//!
//! Two optional knobs, both off by default, model what makes person search
//! hard beyond isotropic noise:
//!
//! * `view_sigma` gives every identity a fixed appearance offset per camera
//!   (same scaling as the noise), so observations from one camera resemble
//!   each other more than observations across cameras;
//! * `lookalike_size` partitions identities into consecutive families whose
//!   prototypes share a common center with cosine `lookalike_similarity`,
//!   modelling people dressed alike such as members of one party.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gallery::{Gallery, GalleryImage, Label};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub n_images: usize,
    /// Inclusive `(min, max)` persons per image.
    pub persons_per_image: (usize, usize),
    pub group_size: usize,
    pub p_group_cohesion: f64,
    /// Root-mean-square length of the per-observation perturbation, added to
    /// the unit prototype before renormalization.
    pub noise_sigma: f64,
    pub dim: usize,
    pub n_cameras: usize,
    pub seed: u64,
    /// Draw mutually orthogonal prototypes (needs `n_identities <= dim`).
    pub orthogonal: bool,
    /// Probability that an emitted person carries no label.
    pub unlabeled_fraction: f64,
    /// Root-mean-square length of the fixed per-(identity, camera) offset.
    pub view_sigma: f64,
    /// Identities per look-alike family; 1 disables families.
    pub lookalike_size: usize,
    /// Cosine between a family member's prototype and the family center,
    /// in `[0, 1)`.
    pub lookalike_similarity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_identities: 20,
            n_images: 30,
            persons_per_image: (1, 4),
            group_size: 3,
            p_group_cohesion: 0.8,
            noise_sigma: 0.1,
            dim: 128,
            n_cameras: 2,
            seed: 0,
            orthogonal: false,
            unlabeled_fraction: 0.0,
            view_sigma: 0.0,
            lookalike_size: 1,
            lookalike_similarity: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let (min, max) = self.persons_per_image;
        if self.n_identities == 0 || self.n_images == 0 {
            return fail("n_identities and n_images must be at least 1".into());
        }
        if min > max {
            return fail(format!("persons_per_image range {min}..{max} is empty"));
        }
        if max > self.n_identities {
            return fail(format!(
                "uniqueness unsatisfiable: up to {max} persons per image but only {} identities",
                self.n_identities
            ));
        }
        if self.group_size == 0 {
            return fail("group_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p_group_cohesion) {
            return fail(format!(
                "p_group_cohesion {} outside [0, 1]",
                self.p_group_cohesion
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!(
                "noise_sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        if self.n_cameras == 0 {
            return fail("n_cameras must be at least 1".into());
        }
        if self.orthogonal && self.n_identities > self.dim {
            return fail(format!(
                "{} orthogonal prototypes do not fit in dimension {}",
                self.n_identities, self.dim
            ));
        }
        if !(0.0..=1.0).contains(&self.unlabeled_fraction) {
            return fail(format!(
                "unlabeled_fraction {} outside [0, 1]",
                self.unlabeled_fraction
            ));
        }
        if !(self.view_sigma >= 0.0 && self.view_sigma.is_finite()) {
            return fail(format!(
                "view_sigma {} must be finite and >= 0",
                self.view_sigma
            ));
        }
        if self.lookalike_size == 0 {
            return fail("lookalike_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.lookalike_similarity) {
            return fail(format!(
                "lookalike_similarity {} outside [0, 1)",
                self.lookalike_similarity
            ));
        }
        if self.orthogonal && self.lookalike_size > 1 {
            return fail("orthogonal prototypes cannot form look-alike families".into());
        }
        Ok(())
    }
}

fn normal_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn prototypes(rng: &mut ChaCha8Rng, config: &SynthConfig) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(config.n_identities);
    while out.len() < config.n_identities {
        let mut v = normal_vector(rng, config.dim);
        if config.orthogonal {
            for p in &out {
                let proj = linalg::dot(&v, p);
                v.iter_mut().zip(p).for_each(|(x, y)| *x -= proj * y);
            }
        }
        // A numerically degenerate draw is discarded and redrawn.
        if linalg::norm(&v) > 1e-6 {
            linalg::normalize(&mut v);
            out.push(v);
        }
    }
    out
}

fn pick_identities(rng: &mut ChaCha8Rng, config: &SynthConfig, count: usize) -> Vec<usize> {
    let cohesive = rng.random::<f64>() < config.p_group_cohesion;
    if !cohesive {
        return sample(rng, config.n_identities, count).into_vec();
    }
    let n_groups = config.n_identities.div_ceil(config.group_size);
    let group = rng.random_range(0..n_groups);
    let start = group * config.group_size;
    let end = (start + config.group_size).min(config.n_identities);
    let from_group = count.min(end - start);
    let mut chosen: Vec<usize> = sample(rng, end - start, from_group)
        .into_iter()
        .map(|i| start + i)
        .collect();
    let rest = count - from_group;
    if rest > 0 {
        let outside = config.n_identities - (end - start);
        chosen.extend(sample(rng, outside, rest).into_iter().map(|i| {
            if i < start {
                i
            } else {
                i + (end - start)
            }
        }));
    }
    chosen
}

/// Identity label used for identity number `id`.
pub fn identity_label(id: usize) -> String {
    format!("id{id:04}")
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v = normal_vector(rng, dim);
        if linalg::norm(&v) > 1e-6 {
            linalg::normalize(&mut v);
            return v;
        }
    }
}

/// Pulls every prototype towards its family center so that its cosine with
/// the center is `sqrt(lookalike_similarity)`; two members of one family then
/// have expected cosine `lookalike_similarity`.
fn apply_lookalikes(rng: &mut ChaCha8Rng, config: &SynthConfig, protos: &mut [Vec<f64>]) {
    let n_families = config.n_identities.div_ceil(config.lookalike_size);
    let centers: Vec<Vec<f64>> = (0..n_families)
        .map(|_| unit_vector(rng, config.dim))
        .collect();
    let (a, b) = (
        config.lookalike_similarity.sqrt(),
        (1.0 - config.lookalike_similarity).sqrt(),
    );
    for (i, p) in protos.iter_mut().enumerate() {
        let c = &centers[i / config.lookalike_size];
        let proj = linalg::dot(p, c);
        let mut u: Vec<f64> = p.iter().zip(c).map(|(x, y)| x - proj * y).collect();
        linalg::normalize(&mut u);
        *p = c.iter().zip(&u).map(|(c, u)| a * c + b * u).collect();
        linalg::normalize(p);
    }
}

/// `base + sigma / sqrt(dim) * N(0, I)`; `base` itself when `sigma == 0`.
fn perturb(rng: &mut ChaCha8Rng, base: &[f64], sigma: f64) -> Vec<f64> {
    let mut out = base.to_vec();
    if sigma > 0.0 {
        let scale = sigma / (base.len() as f64).sqrt();
        for x in out.iter_mut() {
            *x += scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

pub fn generate(config: &SynthConfig) -> Result<Gallery> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut protos = prototypes(&mut rng, config);
    if config.lookalike_size > 1 {
        apply_lookalikes(&mut rng, config, &mut protos);
    }
    // views[identity][camera]
    let views: Vec<Vec<Vec<f64>>> = protos
        .iter()
        .map(|p| {
            (0..config.n_cameras)
                .map(|_| perturb(&mut rng, p, config.view_sigma))
                .collect()
        })
        .collect();
    let (min, max) = config.persons_per_image;

    let mut images = Vec::with_capacity(config.n_images);
    for k in 0..config.n_images {
        let count = rng.random_range(min..=max);
        let ids = pick_identities(&mut rng, config, count);
        let mut persons = Vec::with_capacity(ids.len());
        for id in ids {
            let mut feature = perturb(
                &mut rng,
                &views[id][k % config.n_cameras],
                config.noise_sigma,
            );
            linalg::normalize(&mut feature);
            let unlabeled =
                config.unlabeled_fraction > 0.0 && rng.random::<f64>() < config.unlabeled_fraction;
            let label = if unlabeled {
                Label::Unlabeled
            } else {
                Label::Identity(identity_label(id))
            };
            persons.push((label, feature));
        }
        images.push(GalleryImage::new(
            format!("img{k:05}"),
            Some(format!("cam{}", k % config.n_cameras)),
            persons,
        ));
    }
    Gallery::from_images(images)
}
