//! Co-appearance-based hard positive mining.
//!
//! Persons seen together in one image tend to be seen together again. After
//! a round of matching, every image pair gets a co-appearance score: the sum
//! of base similarities of the person pairs currently matched between the two
//! images. All similarities of that image pair are then raised by
//! `beta * score` and matching is rerun. A uniform per-pair shift never
//! changes which person wins within an image, so existing matches survive;
//! persons with no match yet may now clear the threshold.
//!
//! The shift is always applied to the base similarity, never compounded, and
//! the score always sums base similarities.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::hnm::{mine, MatchMode, PairOffsets, PositiveSets};
use crate::store::FeatureStore;

/// Co-appearance scores per unordered image pair at one iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoAppearanceMatrix {
    pub iteration: usize,
    scores: BTreeMap<(usize, usize), f64>,
}

impl CoAppearanceMatrix {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.scores
            .get(&(k.min(l), k.max(l)))
            .copied()
            .unwrap_or(0.0)
    }

    /// Nonzero-pair entries `((k, l), score)` with `k < l`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.scores.iter().map(|(&key, &v)| (key, v))
    }

    /// Offsets `beta * score` for every pair with a nonzero score.
    pub fn offsets(&self, beta: f64) -> PairOffsets {
        let mut offsets = PairOffsets::new();
        for ((k, l), score) in self.iter() {
            offsets.set(k, l, updated_similarity(0.0, score, beta));
        }
        offsets
    }
}

/// `(anchor slot, member slot, base similarity)` of one matched pair.
type Term = (usize, usize, f64);

// Terms are summed in (lower slot, higher slot) order so that the score of
// (k, l) and (l, k) agree bit-for-bit whenever the sets are symmetric.
fn canonical_sum(mut terms: Vec<Term>) -> f64 {
    terms.sort_by_key(|&(a, b, _)| (a.min(b), a.max(b)));
    terms.iter().map(|&(_, _, s)| s).sum()
}

/// Sum of base similarities over every anchor of image `k` and each member
/// of its set that lies in image `l`.
pub fn co_appearance(k: usize, l: usize, sets: &PositiveSets, store: &FeatureStore) -> Result<f64> {
    let mut terms = Vec::new();
    for i in 0..store.image_len(k) {
        let anchor = store.slot_of(k, i);
        for &member in sets.slot_members(anchor) {
            if sets.image_of(member) == l {
                terms.push((anchor, member, store.slot_similarity(anchor, member)?));
            }
        }
    }
    Ok(canonical_sum(terms))
}

/// Co-appearance for every image pair, computed from the anchors of the
/// lower-positioned image of each pair.
pub fn co_appearance_matrix(
    sets: &PositiveSets,
    store: &FeatureStore,
    iteration: usize,
) -> Result<CoAppearanceMatrix> {
    let mut terms: BTreeMap<(usize, usize), Vec<Term>> = BTreeMap::new();
    for (anchor, member) in sets.links() {
        let (k, l) = (sets.image_of(anchor), sets.image_of(member));
        if k < l {
            terms.entry((k, l)).or_default().push((
                anchor,
                member,
                store.slot_similarity(anchor, member)?,
            ));
        }
    }
    Ok(CoAppearanceMatrix {
        iteration,
        scores: terms
            .into_iter()
            .map(|(key, t)| (key, canonical_sum(t)))
            .collect(),
    })
}

/// Base similarity raised by the weighted co-appearance of its image pair.
pub fn updated_similarity(base: f64, co_appearance: f64, beta: f64) -> f64 {
    base + beta * co_appearance
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HpmConfig {
    pub delta: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub mode: MatchMode,
}

impl Default for HpmConfig {
    fn default() -> Self {
        Self {
            delta: 0.6,
            beta: 0.1,
            max_iters: 3,
            mode: MatchMode::Hnm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// An iteration reproduced the previous sets exactly.
    Fixpoint,
    /// The iteration cap was reached.
    CapTerminated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairShift {
    pub images: [String; 2],
    pub co_appearance: f64,
    pub offset: f64,
}

/// What one iteration used and produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Offsets applied when computing this iteration's sets.
    pub shifts: Vec<PairShift>,
    pub num_links: usize,
    pub set_sizes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct HpmState {
    pub iteration: usize,
    pub sets: PositiveSets,
    /// Scores computed from the final sets' predecessor (empty at iteration 0).
    pub coapp: CoAppearanceMatrix,
    pub termination: Termination,
    pub config: HpmConfig,
    pub trace: Vec<IterationTrace>,
}

fn trace_entry(
    iteration: usize,
    coapp: &CoAppearanceMatrix,
    beta: f64,
    sets: &PositiveSets,
    image_ids: &[String],
) -> IterationTrace {
    IterationTrace {
        iteration,
        shifts: coapp
            .iter()
            .map(|((k, l), score)| PairShift {
                images: [image_ids[k].clone(), image_ids[l].clone()],
                co_appearance: score,
                offset: updated_similarity(0.0, score, beta),
            })
            .collect(),
        num_links: sets.num_links(),
        set_sizes: sets.sizes(),
    }
}

/// Plain matching at iteration 0, then up to `max_iters` rounds of
/// co-appearance shifting, stopping early when the sets stop changing.
pub fn run_hpm(store: &FeatureStore, config: HpmConfig) -> Result<HpmState> {
    let image_ids = store.image_ids();

    let mut coapp = CoAppearanceMatrix::default();
    let mut sets = mine(store, config.delta, &PairOffsets::new(), config.mode)?;
    let mut trace = vec![trace_entry(0, &coapp, config.beta, &sets, image_ids)];
    let mut iteration = 0;
    let mut termination = Termination::CapTerminated;

    while iteration < config.max_iters {
        coapp = co_appearance_matrix(&sets, store, iteration)?;
        let next = mine(
            store,
            config.delta,
            &coapp.offsets(config.beta),
            config.mode,
        )?;
        iteration += 1;
        trace.push(trace_entry(
            iteration,
            &coapp,
            config.beta,
            &next,
            image_ids,
        ));
        let settled = next == sets;
        sets = next;
        if settled {
            termination = Termination::Fixpoint;
            break;
        }
    }

    Ok(HpmState {
        iteration,
        sets,
        coapp,
        termination,
        config,
        trace,
    })
}
