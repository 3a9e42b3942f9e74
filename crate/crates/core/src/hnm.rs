//! Uniqueness-based hard negative mining.
//!
//! A person appears at most once per scene image, so for an anchor and
//! another image at most one person of that image can share the anchor's
//! identity. Matching therefore runs in three steps per (anchor, image):
//!
//! 1. keep the persons whose similarity to the anchor exceeds `delta`;
//! 2. keep only the most similar of those (winner-take-all);
//! 3. run the same two steps backwards from the winner into the anchor's
//!    image, and keep the winner only if that returns the anchor.
//!
//! The union of the surviving winners over all other images is the anchor's
//! positive set. Because the backward pass uses the same threshold and the
//! same (symmetric) similarities, positive sets are symmetric: `b` is in the
//! set of `a` exactly when `a` is in the set of `b`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gallery::InstanceRef;
use crate::store::{FeatureStore, SimilarityMatrix};

/// How per-image candidates are turned into matches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Every candidate above the threshold is kept; no winner-take-all and
    /// no backward check.
    Threshold,
    /// Threshold, winner-take-all and the backward cycle-consistency check.
    Hnm,
}

/// Additive similarity offsets per unordered image pair, keyed by gallery
/// positions. Missing pairs have offset zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairOffsets {
    offsets: BTreeMap<(usize, usize), f64>,
}

impl PairOffsets {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(k: usize, l: usize) -> (usize, usize) {
        (k.min(l), k.max(l))
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.offsets.get(&Self::key(k, l)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, k: usize, l: usize, offset: f64) {
        self.offsets.insert(Self::key(k, l), offset);
    }

    /// Nonzero entries as `((k, l), offset)` with `k < l`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.offsets.iter().map(|(&key, &v)| (key, v))
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

fn candidates_by(len: usize, score: impl Fn(usize) -> f64, delta: f64) -> Vec<usize> {
    (0..len).filter(|&j| score(j) > delta).collect()
}

fn wta_by(candidates: &[usize], score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in candidates {
        let s = score(j);
        // Strict comparison keeps the lowest index on ties.
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

/// Persons of the column image whose shifted similarity to row `anchor`
/// strictly exceeds `delta`, in index order.
pub fn candidate_set(sims: &SimilarityMatrix, anchor: usize, delta: f64) -> Vec<usize> {
    candidates_by(sims.cols(), |j| sims.get(anchor, j), delta)
}

/// The candidate most similar to row `anchor`; ties go to the lowest index.
pub fn wta(sims: &SimilarityMatrix, anchor: usize, candidates: &[usize]) -> Option<usize> {
    wta_by(candidates, |j| sims.get(anchor, j))
}

/// Forward winner-take-all from row `anchor` into the column image, kept only
/// if the backward winner-take-all from that winner returns `anchor`.
pub fn cycle_consistent_match(sims: &SimilarityMatrix, anchor: usize, delta: f64) -> Option<usize> {
    let forward = wta(sims, anchor, &candidate_set(sims, anchor, delta))?;
    let column = |i: usize| sims.get(i, forward);
    let backward = wta_by(&candidates_by(sims.rows(), column, delta), column)?;
    (backward == anchor).then_some(forward)
}

/// Per-anchor positive sets over the persons of one gallery.
///
/// Every person has an entry (possibly empty). Members are stored as flat
/// store slots; the public accessors speak [`InstanceRef`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositiveSets {
    refs: Vec<InstanceRef>,
    image_of: Vec<usize>,
    members: Vec<BTreeSet<usize>>,
}

impl PositiveSets {
    /// All-empty sets for the persons of `store`.
    pub fn empty(store: &FeatureStore) -> Self {
        Self {
            refs: store.refs().to_vec(),
            image_of: (0..store.len()).map(|s| store.image_of(s)).collect(),
            members: vec![BTreeSet::new(); store.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// Adds `member` to the set of `anchor` (both flat slots).
    pub fn insert(&mut self, anchor: usize, member: usize) {
        self.members[anchor].insert(member);
    }

    pub fn slot_members(&self, anchor: usize) -> &BTreeSet<usize> {
        &self.members[anchor]
    }

    pub fn image_of(&self, slot: usize) -> usize {
        self.image_of[slot]
    }

    pub fn instance_ref(&self, slot: usize) -> &InstanceRef {
        &self.refs[slot]
    }

    fn slot(&self, id: &InstanceRef) -> Option<usize> {
        self.refs.iter().position(|r| r == id)
    }

    /// Members of `anchor`'s set, sorted by `(image_id, index)`.
    pub fn members(&self, anchor: &InstanceRef) -> Option<Vec<InstanceRef>> {
        let slot = self.slot(anchor)?;
        let mut out: Vec<InstanceRef> = self.members[slot]
            .iter()
            .map(|&m| self.refs[m].clone())
            .collect();
        out.sort();
        Some(out)
    }

    pub fn contains(&self, anchor: &InstanceRef, member: &InstanceRef) -> bool {
        match (self.slot(anchor), self.slot(member)) {
            (Some(a), Some(m)) => self.members[a].contains(&m),
            _ => false,
        }
    }

    /// `(anchor, member)` slot pairs in anchor order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.members
            .iter()
            .enumerate()
            .flat_map(|(a, set)| set.iter().map(move |&m| (a, m)))
    }

    pub fn num_links(&self) -> usize {
        self.members.iter().map(BTreeSet::len).sum()
    }

    /// Sizes of every set, in slot order.
    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(BTreeSet::len).collect()
    }

    /// True when every set here contains the corresponding set of `other`.
    pub fn is_superset_of(&self, other: &PositiveSets) -> bool {
        self.members
            .iter()
            .zip(&other.members)
            .all(|(mine, theirs)| mine.is_superset(theirs))
    }
}

/// Runs matching between every pair of distinct images with the given
/// per-pair offsets and collects each anchor's positive set.
pub fn mine(
    store: &FeatureStore,
    delta: f64,
    offsets: &PairOffsets,
    mode: MatchMode,
) -> Result<PositiveSets> {
    let n = store.num_images();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|k| (k + 1..n).map(move |l| (k, l)))
        .filter(|&(k, l)| store.image_len(k) > 0 && store.image_len(l) > 0)
        .collect();

    let links: Vec<Vec<(usize, usize)>> = pairs
        .par_iter()
        .map(|&(k, l)| {
            let forward = store.pairwise(k, l, offsets.get(k, l))?;
            let backward = forward.transpose();
            let mut links = Vec::new();
            for (sims, from, to) in [(&forward, k, l), (&backward, l, k)] {
                for i in 0..sims.rows() {
                    let anchor = store.slot_of(from, i);
                    match mode {
                        MatchMode::Hnm => {
                            if let Some(j) = cycle_consistent_match(sims, i, delta) {
                                links.push((anchor, store.slot_of(to, j)));
                            }
                        }
                        MatchMode::Threshold => {
                            links.extend(
                                candidate_set(sims, i, delta)
                                    .into_iter()
                                    .map(|j| (anchor, store.slot_of(to, j))),
                            );
                        }
                    }
                }
            }
            Ok(links)
        })
        .collect::<Result<_>>()?;

    let mut sets = PositiveSets::empty(store);
    for (anchor, member) in links.into_iter().flatten() {
        sets.insert(anchor, member);
    }
    Ok(sets)
}

/// Hard-negative-mined positive sets with per-pair similarity offsets.
pub fn positive_sets(
    store: &FeatureStore,
    delta: f64,
    offsets: &PairOffsets,
) -> Result<PositiveSets> {
    mine(store, delta, offsets, MatchMode::Hnm)
}

#[derive(Serialize, Deserialize)]
struct SetRecord {
    anchor: InstanceRef,
    members: Vec<InstanceRef>,
}

/// Writes one JSON line per anchor (gallery order) with sorted members.
pub fn write_positive_sets<W: Write>(writer: W, sets: &PositiveSets) -> Result<()> {
    let mut out = BufWriter::new(writer);
    for (slot, anchor) in sets.refs.iter().enumerate() {
        let mut members: Vec<InstanceRef> = sets.members[slot]
            .iter()
            .map(|&m| sets.refs[m].clone())
            .collect();
        members.sort();
        let record = SetRecord {
            anchor: anchor.clone(),
            members,
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads sets written by [`write_positive_sets`], resolving references
/// against `store`. Anchors absent from the file get empty sets.
pub fn read_positive_sets<R: Read>(reader: R, store: &FeatureStore) -> Result<PositiveSets> {
    let mut sets = PositiveSets::empty(store);
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SetRecord = serde_json::from_str(&line).map_err(|source| Error::Parse {
            line: lineno + 1,
            source,
        })?;
        let anchor = store.slot(&record.anchor)?;
        for member in &record.members {
            sets.insert(anchor, store.slot(member)?);
        }
    }
    Ok(sets)
}
