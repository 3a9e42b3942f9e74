//! Person-search evaluation: gallery protocols, ranked retrieval, AP / mAP,
//! Top-k, and pairwise precision/recall of clustering output.
//!
//! Two gallery protocols are supported. The *regular* gallery holds every
//! image except the query's own and drops unlabeled persons. The
//! *multi-view* gallery drops every image taken by the query's camera and
//! keeps unlabeled persons as distractors.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gallery::{Gallery, InstanceRef, Label};
use crate::hnm::PositiveSets;
use crate::linalg;
use crate::store::FeatureStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Regular,
    MultiView,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Regular => "regular",
            Protocol::MultiView => "multi-view",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(Protocol::Regular),
            "multi-view" | "multiview" => Ok(Protocol::MultiView),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

/// The candidates a query is ranked against.
#[derive(Clone, Debug, PartialEq)]
pub struct GalleryView {
    pub query: InstanceRef,
    pub candidates: Vec<InstanceRef>,
    pub protocol: Protocol,
}

fn labeled_query<'g>(query: &InstanceRef, gallery: &'g Gallery) -> Result<&'g Label> {
    let person = gallery
        .get(query)
        .ok_or_else(|| Error::UnknownInstance(query.image_id.clone(), query.index))?;
    if !person.label.is_labeled() {
        return Err(Error::Protocol(format!("query {query} is unlabeled")));
    }
    Ok(&person.label)
}

/// Every labeled person outside the query's image, in gallery order.
pub fn build_regular_gallery(query: &InstanceRef, gallery: &Gallery) -> Result<GalleryView> {
    labeled_query(query, gallery)?;
    let candidates = gallery
        .images()
        .iter()
        .filter(|im| im.image_id != query.image_id)
        .flat_map(|im| im.instances.iter())
        .filter(|p| p.label.is_labeled())
        .map(|p| p.id.clone())
        .collect();
    Ok(GalleryView {
        query: query.clone(),
        candidates,
        protocol: Protocol::Regular,
    })
}

/// Every person, labeled or not, in images from cameras other than the
/// query's. Requires a camera id on every image. The result is empty when
/// all images share the query's camera.
pub fn build_multiview_gallery(query: &InstanceRef, gallery: &Gallery) -> Result<GalleryView> {
    labeled_query(query, gallery)?;
    if let Some(im) = gallery.images().iter().find(|im| im.camera_id.is_none()) {
        return Err(Error::Protocol(format!(
            "multi-view gallery needs camera ids; image {:?} has none",
            im.image_id
        )));
    }
    let camera = &gallery
        .image(&query.image_id)
        .expect("query image exists")
        .camera_id;
    let candidates = gallery
        .images()
        .iter()
        .filter(|im| &im.camera_id != camera)
        .flat_map(|im| im.instances.iter())
        .map(|p| p.id.clone())
        .collect();
    Ok(GalleryView {
        query: query.clone(),
        candidates,
        protocol: Protocol::MultiView,
    })
}

pub fn build_view(
    protocol: Protocol,
    query: &InstanceRef,
    gallery: &Gallery,
) -> Result<GalleryView> {
    match protocol {
        Protocol::Regular => build_regular_gallery(query, gallery),
        Protocol::MultiView => build_multiview_gallery(query, gallery),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedCandidate {
    pub id: InstanceRef,
    pub score: f64,
    pub relevant: bool,
}

/// Candidates by descending score; ties ordered by `(image_id, index)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedResult {
    pub query: InstanceRef,
    pub ranked: Vec<RankedCandidate>,
}

impl RankedResult {
    /// Builds a result from relevance flags alone, already in rank order.
    /// Scores descend from 1.
    pub fn from_relevance(query: InstanceRef, relevance: &[bool]) -> Self {
        let n = relevance.len().max(1) as f64;
        Self {
            query,
            ranked: relevance
                .iter()
                .enumerate()
                .map(|(i, &relevant)| RankedCandidate {
                    id: InstanceRef::new("", i),
                    score: 1.0 - i as f64 / n,
                    relevant,
                })
                .collect(),
        }
    }

    pub fn num_relevant(&self) -> usize {
        self.ranked.iter().filter(|c| c.relevant).count()
    }
}

/// Ranks the view's candidates by similarity to the query's memory vector.
pub fn search(view: &GalleryView, gallery: &Gallery, store: &FeatureStore) -> Result<RankedResult> {
    let label = &gallery
        .get(&view.query)
        .ok_or_else(|| Error::UnknownInstance(view.query.image_id.clone(), view.query.index))?
        .label;
    let q = store.feature_of(&view.query)?;
    let mut ranked = view
        .candidates
        .iter()
        .map(|id| {
            let person = gallery
                .get(id)
                .ok_or_else(|| Error::UnknownInstance(id.image_id.clone(), id.index))?;
            Ok(RankedCandidate {
                id: id.clone(),
                score: linalg::dot(q, store.feature_of(id)?),
                relevant: label.matches(&person.label),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ok(RankedResult {
        query: view.query.clone(),
        ranked,
    })
}

/// Mean of precision at each relevant hit, over all relevant candidates.
/// `None` when the ranking holds no relevant candidate (the query is skipped).
pub fn average_precision(result: &RankedResult) -> Option<f64> {
    let total = result.num_relevant();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, c) in result.ranked.iter().enumerate() {
        if c.relevant {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Whether a relevant candidate appears within the first `k` ranks.
/// `None` for skipped queries.
pub fn hit_at(result: &RankedResult, k: usize) -> Option<bool> {
    (result.num_relevant() > 0).then(|| result.ranked.iter().take(k).any(|c| c.relevant))
}

pub fn mean_ap(results: &[RankedResult]) -> Result<f64> {
    let aps: Vec<f64> = results.iter().filter_map(average_precision).collect();
    if aps.is_empty() {
        return Err(Error::AllQueriesSkipped);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Fraction of scored queries with a relevant candidate in the top `k`.
pub fn top_k(results: &[RankedResult], k: usize) -> Result<f64> {
    let hits: Vec<bool> = results.iter().filter_map(|r| hit_at(r, k)).collect();
    if hits.is_empty() {
        return Err(Error::AllQueriesSkipped);
    }
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub top_k: BTreeMap<String, f64>,
    pub num_queries: usize,
    pub skipped: usize,
}

/// Ranks every labeled person against its protocol gallery and aggregates.
pub fn evaluate(
    gallery: &Gallery,
    store: &FeatureStore,
    protocol: Protocol,
    ks: &[usize],
) -> Result<EvalReport> {
    if protocol == Protocol::MultiView {
        let cameras: HashSet<&Option<String>> =
            gallery.images().iter().map(|im| &im.camera_id).collect();
        if cameras.contains(&None) {
            return Err(Error::Protocol(
                "multi-view gallery needs a camera id on every image".into(),
            ));
        }
        if cameras.len() < 2 {
            return Err(Error::Protocol(
                "multi-view gallery needs at least two cameras".into(),
            ));
        }
    }
    let queries: Vec<&InstanceRef> = gallery
        .instances()
        .filter(|p| p.label.is_labeled())
        .map(|p| &p.id)
        .collect();
    if queries.is_empty() {
        return Err(Error::Unlabeled);
    }
    let results = queries
        .par_iter()
        .map(|q| search(&build_view(protocol, q, gallery)?, gallery, store))
        .collect::<Result<Vec<_>>>()?;

    let map = mean_ap(&results)?;
    let top_k = ks
        .iter()
        .map(|&k| Ok((k.to_string(), top_k(&results, k)?)))
        .collect::<Result<_>>()?;
    let skipped = results.iter().filter(|r| r.num_relevant() == 0).count();
    Ok(EvalReport {
        protocol,
        map,
        top_k,
        num_queries: results.len() - skipped,
        skipped,
    })
}

/// Pairwise agreement of positive sets with ground-truth labels.
///
/// A predicted pair is an unordered person pair linked in either direction;
/// a true pair is two labeled persons sharing an identity. Pairs involving an
/// unlabeled person are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairwiseScores {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn pairwise_scores(gallery: &Gallery, sets: &PositiveSets) -> PairwiseScores {
    let labels: Vec<&Label> = gallery.instances().map(|p| &p.label).collect();
    let predicted: HashSet<(usize, usize)> = sets
        .links()
        .filter(|&(a, b)| labels[a].is_labeled() && labels[b].is_labeled())
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    let true_positives = predicted
        .iter()
        .filter(|&&(a, b)| labels[a].matches(labels[b]))
        .count();

    let mut per_identity: BTreeMap<&str, usize> = BTreeMap::new();
    for label in &labels {
        if let Some(name) = label.as_identity() {
            *per_identity.entry(name).or_default() += 1;
        }
    }
    let actual: usize = per_identity.values().map(|&n| n * (n - 1) / 2).sum();

    let false_positives = predicted.len() - true_positives;
    let false_negatives = actual - true_positives;
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(true_positives, predicted.len());
    let recall = ratio(true_positives, actual);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PairwiseScores {
        true_positives,
        false_positives,
        false_negatives,
        precision,
        recall,
        f1,
    }
}
