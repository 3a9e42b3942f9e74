//! Independent reference implementations shared by the integration tests.
//!
//! Everything here works on raw nested vectors (`images[k][i]` is the feature
//! of person `i` in image `k`) and recomputes every quantity from scratch
//! with plain loops, so it shares no code with the library under test.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use person_cluster::gallery::{Gallery, GalleryImage, Label};
use person_cluster::hnm::PositiveSets;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Images = Vec<Vec<Vec<f64>>>;
/// `(image position, index within image)`.
pub type Person = (usize, usize);
pub type Links = BTreeSet<(Person, Person)>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..a.len() {
        s += a[d] * b[d];
    }
    s
}

pub fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
    v
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    unit((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

/// A random gallery with some identity structure: persons are noisy copies
/// of a few prototypes, so similarities spread across the threshold.
/// Returns the features and the prototype index of every person.
pub fn random_images(
    rng: &mut ChaCha8Rng,
    max_images: usize,
    max_persons: usize,
    dim: usize,
) -> (Images, Vec<Vec<usize>>) {
    let n_protos = rng.random_range(1..=4);
    let protos: Vec<Vec<f64>> = (0..n_protos).map(|_| random_unit(rng, dim)).collect();
    let noise = rng.random_range(0.0..0.6);
    let n_images = rng.random_range(1..=max_images);
    let mut images = Vec::new();
    let mut ids = Vec::new();
    for _ in 0..n_images {
        let n = rng.random_range(0..=max_persons);
        let mut feats = Vec::new();
        let mut who = Vec::new();
        for _ in 0..n {
            let p = rng.random_range(0..n_protos);
            let f: Vec<f64> = protos[p]
                .iter()
                .map(|x| x + noise * rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt())
                .collect();
            feats.push(unit(f));
            who.push(p);
        }
        images.push(feats);
        ids.push(who);
    }
    (images, ids)
}

/// A gallery over `images`; persons are labeled by `ids` when given.
pub fn gallery(images: &Images, ids: Option<&[Vec<usize>]>) -> Gallery {
    Gallery::from_images(
        images
            .iter()
            .enumerate()
            .map(|(k, feats)| {
                let persons = feats.iter().enumerate().map(|(i, f)| {
                    let label = match ids {
                        Some(ids) => Label::identity(format!("p{}", ids[k][i])),
                        None => Label::Unlabeled,
                    };
                    (label, f.clone())
                });
                GalleryImage::new(format!("im{k:03}"), Some(format!("c{}", k % 2)), persons)
            })
            .collect(),
    )
    .unwrap()
}

/// First index attaining the maximum of `score` over `candidates`.
fn argmax(candidates: &[usize], score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &c in candidates {
        match best {
            Some(b) if score(c) <= score(b) => {}
            _ => best = Some(c),
        }
    }
    best
}

/// Brute-force mining. `offset(k, l)` is added to every similarity between
/// images `k` and `l`; `hnm == false` keeps every above-threshold candidate.
pub fn mine(images: &Images, delta: f64, offset: &dyn Fn(usize, usize) -> f64, hnm: bool) -> Links {
    let mut links = Links::new();
    for k in 0..images.len() {
        for i in 0..images[k].len() {
            for l in 0..images.len() {
                if l == k {
                    continue;
                }
                let o = offset(k, l);
                let s = |a: &[f64], b: &[f64]| dot(a, b) + o;
                let forward: Vec<usize> = (0..images[l].len())
                    .filter(|&j| s(&images[k][i], &images[l][j]) > delta)
                    .collect();
                if !hnm {
                    for j in forward {
                        links.insert(((k, i), (l, j)));
                    }
                    continue;
                }
                let Some(j) = argmax(&forward, |j| s(&images[k][i], &images[l][j])) else {
                    continue;
                };
                let backward: Vec<usize> = (0..images[k].len())
                    .filter(|&c| s(&images[l][j], &images[k][c]) > delta)
                    .collect();
                if argmax(&backward, |c| s(&images[l][j], &images[k][c])) == Some(i) {
                    links.insert(((k, i), (l, j)));
                }
            }
        }
    }
    links
}

/// Sum of base similarities of linked pairs, per unordered image pair.
pub fn co_appearance(images: &Images, links: &Links) -> BTreeMap<(usize, usize), f64> {
    let mut a = BTreeMap::new();
    for &((k, i), (l, j)) in links {
        *a.entry((k, l)).or_insert(0.0) += dot(&images[k][i], &images[l][j]);
    }
    a
}

pub struct HpmRun {
    pub links: Links,
    pub iteration: usize,
    pub fixpoint: bool,
}

/// Naive iterate: plain mining, then up to `max_iters` rounds of recomputing
/// co-appearance and re-mining from scratch, stopping when nothing changes.
pub fn hpm(images: &Images, delta: f64, beta: f64, max_iters: usize, hnm: bool) -> HpmRun {
    let mut links = mine(images, delta, &|_, _| 0.0, hnm);
    for t in 1..=max_iters {
        let a = co_appearance(images, &links);
        let next = mine(
            images,
            delta,
            &|k, l| beta * a.get(&(k, l)).copied().unwrap_or(0.0),
            hnm,
        );
        if next == links {
            return HpmRun {
                links,
                iteration: t,
                fixpoint: true,
            };
        }
        links = next;
    }
    HpmRun {
        links,
        iteration: max_iters,
        fixpoint: false,
    }
}

/// The library's sets as `(anchor, member)` pairs in gallery coordinates.
pub fn links_of(sets: &PositiveSets, g: &Gallery) -> Links {
    let mut links = Links::new();
    for img in g.images() {
        for p in &img.instances {
            let k = g.image_position(&p.id.image_id).unwrap();
            for m in sets.members(&p.id).unwrap() {
                let l = g.image_position(&m.image_id).unwrap();
                links.insert(((k, p.id.index), (l, m.index)));
            }
        }
    }
    links
}

/// Orthogonal unit prototypes `e_0 .. e_{n-1}` in dimension `dim`.
pub fn axis(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}
