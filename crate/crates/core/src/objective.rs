//! The memory-bank re-identification objective.
//!
//! For a detected person with extracted feature `g`, the loss pushes `g`
//! towards the memory vectors of its positive set `C` and away from a small
//! population of hard negatives `D`: the non-positives whose memory vectors
//! are most similar to the anchor's own. With `s_m = <f_m, g>` and
//! temperature `tau`,
//!
//! ```text
//! p(j) = exp(s_j / tau) / sum_{m in C ∪ D} exp(s_m / tau)
//! L    = -(1/|C|) sum_{j in C} ln p(j)
//! dL/dg = (sum_{m in C ∪ D} p(m) f_m - (1/|C|) sum_{j in C} f_j) / tau
//! ```

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::store::FeatureStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossConfig {
    pub tau: f64,
    pub hard_neg_ratio: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            hard_neg_ratio: 0.01,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.hard_neg_ratio > 0.0 && self.hard_neg_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "hard negative ratio must lie in (0, 1], got {}",
                self.hard_neg_ratio
            )));
        }
        Ok(())
    }
}

/// Number of hard negatives drawn from a pool of `pool` candidates:
/// `ceil(ratio * pool)`, at least one for a nonempty pool.
pub fn hard_negative_count(pool: usize, ratio: f64) -> usize {
    if pool == 0 {
        return 0;
    }
    // The epsilon keeps products like 0.01 * 300 = 3.0000000000000004 at 3.
    let count = (ratio * pool as f64 - 1e-9).ceil().max(1.0) as usize;
    count.min(pool)
}

/// The `hard_negative_count` non-positive persons most similar to the anchor's
/// memory vector, most similar first. The anchor itself is never included;
/// ties go to the earlier slot.
pub fn hard_negative_set(
    anchor: usize,
    positives: &BTreeSet<usize>,
    store: &FeatureStore,
    ratio: f64,
) -> Result<Vec<usize>> {
    let f = store.feature(anchor)?;
    let mut pool = Vec::new();
    for slot in 0..store.len() {
        if slot != anchor && !positives.contains(&slot) {
            pool.push((slot, linalg::dot(f, store.feature(slot)?)));
        }
    }
    pool.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let count = hard_negative_count(pool.len(), ratio);
    Ok(pool.into_iter().take(count).map(|(slot, _)| slot).collect())
}

/// Temperature softmax of `sims`, stabilized by subtracting the maximum logit.
pub fn softmax(sims: &[f64], tau: f64) -> Vec<f64> {
    let logits: Vec<f64> = sims.iter().map(|s| s / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Loss value, per-positive probabilities and the gradient with respect to `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub probabilities: Vec<f64>,
    pub gradient: Vec<f64>,
}

/// The loss over explicit memory vectors: `positives` is `C`, `negatives` is `D`.
pub fn loss_from_features(
    g: &[f64],
    positives: &[&[f64]],
    negatives: &[&[f64]],
    tau: f64,
) -> Result<LossResult> {
    if positives.is_empty() {
        return Err(Error::EmptyPositives);
    }
    let population: Vec<&[f64]> = positives.iter().chain(negatives).copied().collect();
    for f in &population {
        if f.len() != g.len() {
            return Err(Error::Dimension {
                expected: g.len(),
                found: f.len(),
            });
        }
    }
    let logits: Vec<f64> = population.iter().map(|f| linalg::dot(f, g) / tau).collect();
    let lse = log_sum_exp(&logits);
    let n_pos = positives.len() as f64;

    let value = logits[..positives.len()]
        .iter()
        .map(|z| lse - z)
        .sum::<f64>()
        / n_pos;
    let probabilities = logits[..positives.len()]
        .iter()
        .map(|z| (z - lse).exp())
        .collect();

    let mut gradient = vec![0.0; g.len()];
    for (f, z) in population.iter().zip(&logits) {
        let p = (z - lse).exp();
        gradient.iter_mut().zip(*f).for_each(|(d, x)| *d += p * x);
    }
    for f in positives {
        gradient
            .iter_mut()
            .zip(*f)
            .for_each(|(d, x)| *d -= x / n_pos);
    }
    gradient.iter_mut().for_each(|d| *d /= tau);

    Ok(LossResult {
        value,
        probabilities,
        gradient,
    })
}

fn population(positives: &[usize], negatives: &[usize]) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    positives
        .iter()
        .chain(negatives)
        .copied()
        .filter(|s| seen.insert(*s))
        .collect()
}

/// Probability of `target` under the softmax over `C ∪ D`.
pub fn probability(
    g: &[f64],
    target: usize,
    positives: &[usize],
    negatives: &[usize],
    store: &FeatureStore,
    tau: f64,
) -> Result<f64> {
    let members = population(positives, negatives);
    if members.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let at = members
        .iter()
        .position(|&m| m == target)
        .ok_or(Error::TargetOutsidePopulation)?;
    let sims = members
        .iter()
        .map(|&m| Ok(linalg::dot(store.feature(m)?, g)))
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax(&sims, tau)[at])
}

/// The loss for extracted feature `g` with positives and negatives given as
/// store slots. Negatives that are also positives are counted once.
pub fn reid_loss(
    g: &[f64],
    positives: &[usize],
    negatives: &[usize],
    store: &FeatureStore,
    tau: f64,
) -> Result<LossResult> {
    let pos_set: BTreeSet<usize> = positives.iter().copied().collect();
    let pos: Vec<&[f64]> = pos_set
        .iter()
        .map(|&s| store.feature(s))
        .collect::<Result<_>>()?;
    let neg: Vec<&[f64]> = negatives
        .iter()
        .filter(|s| !pos_set.contains(s))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|&s| store.feature(s))
        .collect::<Result<_>>()?;
    loss_from_features(g, &pos, &neg, tau)
}

/// Central-difference gradient of the loss value with respect to `g`.
pub fn numerical_gradient(
    g: &[f64],
    positives: &[&[f64]],
    negatives: &[&[f64]],
    tau: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = g.to_vec();
    let mut out = Vec::with_capacity(g.len());
    for d in 0..g.len() {
        probe[d] = g[d] + step;
        let up = loss_from_features(&probe, positives, negatives, tau)?.value;
        probe[d] = g[d] - step;
        let down = loss_from_features(&probe, positives, negatives, tau)?.value;
        probe[d] = g[d];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Norm-wise relative difference `||a - b|| / max(||a||, ||b||, 1e-8)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    linalg::norm(&diff) / linalg::norm(a).max(linalg::norm(b)).max(1e-8)
}
