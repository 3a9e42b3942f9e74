//! The global feature memory: one normalized vector per gallery person,
//! updated by accumulate-and-renormalize, plus the similarity evaluation
//! every other module is built on.
//!
//! Similarity is the inner product of unit vectors (cosine similarity), so
//! every base similarity lies in `[-1, 1]`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gallery::{Gallery, InstanceRef};
use crate::linalg;

/// Cosine similarity of two unit vectors.
pub fn similarity(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::Dimension {
            expected: f.len(),
            found: g.len(),
        });
    }
    Ok(linalg::dot(f, g))
}

/// Dense per-instance memory laid out in gallery order.
#[derive(Clone, Debug)]
pub struct FeatureStore {
    dim: usize,
    data: Vec<f64>,
    populated: Vec<bool>,
    // First slot of each image, plus a trailing end marker.
    image_starts: Vec<usize>,
    refs: Vec<InstanceRef>,
    image_ids: Vec<String>,
    positions: HashMap<String, usize>,
}

impl FeatureStore {
    /// One zero slot per gallery person.
    pub fn empty(gallery: &Gallery) -> Self {
        let mut image_starts = Vec::with_capacity(gallery.num_images() + 1);
        let mut refs = Vec::with_capacity(gallery.num_instances());
        let mut positions = HashMap::with_capacity(gallery.num_images());
        for (pos, image) in gallery.images().iter().enumerate() {
            image_starts.push(refs.len());
            positions.insert(image.image_id.clone(), pos);
            refs.extend(image.instances.iter().map(|p| p.id.clone()));
        }
        image_starts.push(refs.len());
        let image_ids = gallery
            .images()
            .iter()
            .map(|im| im.image_id.clone())
            .collect();
        let dim = gallery.dim();
        Self {
            dim,
            data: vec![0.0; refs.len() * dim],
            populated: vec![false; refs.len()],
            image_starts,
            refs,
            image_ids,
            positions,
        }
    }

    /// A store whose slots have each received the gallery feature once.
    pub fn from_gallery(gallery: &Gallery) -> Result<Self> {
        let mut store = Self::empty(gallery);
        for (slot, person) in gallery.instances().enumerate() {
            store.update_slot(slot, &person.feature)?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn num_images(&self) -> usize {
        self.image_starts.len() - 1
    }

    /// Number of persons in the image at gallery position `image`.
    pub fn image_len(&self, image: usize) -> usize {
        self.image_starts[image + 1] - self.image_starts[image]
    }

    /// Flat slot index of person `index` in the image at position `image`.
    pub fn slot_of(&self, image: usize, index: usize) -> usize {
        debug_assert!(index < self.image_len(image));
        self.image_starts[image] + index
    }

    /// Gallery position of the image holding `slot`.
    pub fn image_of(&self, slot: usize) -> usize {
        self.image_starts.partition_point(|&start| start <= slot) - 1
    }

    pub fn slot(&self, id: &InstanceRef) -> Result<usize> {
        let unknown = || Error::UnknownInstance(id.image_id.clone(), id.index);
        let image = *self.positions.get(&id.image_id).ok_or_else(unknown)?;
        if id.index >= self.image_len(image) {
            return Err(unknown());
        }
        Ok(self.slot_of(image, id.index))
    }

    pub fn instance_ref(&self, slot: usize) -> &InstanceRef {
        &self.refs[slot]
    }

    /// Image ids in gallery order.
    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn refs(&self) -> &[InstanceRef] {
        &self.refs
    }

    pub fn is_populated(&self, slot: usize) -> bool {
        self.populated[slot]
    }

    /// Memory vector of `slot`; the zero vector if never updated.
    pub fn vector(&self, slot: usize) -> &[f64] {
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Memory vector of `slot`, failing if it was never populated.
    pub fn feature(&self, slot: usize) -> Result<&[f64]> {
        if !self.populated[slot] {
            let id = &self.refs[slot];
            return Err(Error::EmptySlot(id.image_id.clone(), id.index));
        }
        Ok(self.vector(slot))
    }

    pub fn feature_of(&self, id: &InstanceRef) -> Result<&[f64]> {
        self.feature(self.slot(id)?)
    }

    /// Accumulates `g` into the slot and renormalizes: `f <- (f + g) / ||f + g||`.
    ///
    /// If `f + g` vanishes the slot is left unchanged and
    /// [`Error::DegenerateUpdate`] is returned.
    pub fn update_memory(&mut self, id: &InstanceRef, g: &[f64]) -> Result<()> {
        let slot = self.slot(id)?;
        self.update_slot(slot, g)
    }

    pub fn update_slot(&mut self, slot: usize, g: &[f64]) -> Result<()> {
        if g.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: g.len(),
            });
        }
        let range = slot * self.dim..(slot + 1) * self.dim;
        let mut next: Vec<f64> = self.data[range.clone()]
            .iter()
            .zip(g)
            .map(|(f, g)| f + g)
            .collect();
        if linalg::normalize(&mut next) == 0.0 {
            return Err(Error::DegenerateUpdate);
        }
        self.data[range].copy_from_slice(&next);
        self.populated[slot] = true;
        Ok(())
    }

    /// Similarity between two populated slots.
    pub fn slot_similarity(&self, a: usize, b: usize) -> Result<f64> {
        Ok(linalg::dot(self.feature(a)?, self.feature(b)?))
    }

    /// All similarities between persons of images `k` and `l` (gallery
    /// positions), with `offset` added to every entry.
    pub fn pairwise(&self, k: usize, l: usize, offset: f64) -> Result<SimilarityMatrix> {
        let (rows, cols) = (self.image_len(k), self.image_len(l));
        let mut base = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let f = self.feature(self.slot_of(k, i))?;
            for j in 0..cols {
                base.push(linalg::dot(f, self.feature(self.slot_of(l, j))?));
            }
        }
        Ok(SimilarityMatrix {
            rows,
            cols,
            base,
            offset,
        })
    }
}

/// Similarities between the persons of an ordered image pair `(k, l)`:
/// row `i` is person `i` of `k`, column `j` is person `j` of `l`.
/// Entries are the base similarity plus one uniform offset.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    base: Vec<f64>,
    offset: f64,
}

impl SimilarityMatrix {
    /// Builds a matrix from row-major base similarities.
    ///
    /// # Panics
    /// If `base.len() != rows * cols`.
    pub fn from_base(rows: usize, cols: usize, base: Vec<f64>, offset: f64) -> Self {
        assert_eq!(base.len(), rows * cols, "similarity matrix shape mismatch");
        Self {
            rows,
            cols,
            base,
            offset,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn base(&self, i: usize, j: usize) -> f64 {
        self.base[i * self.cols + j]
    }

    /// Shifted similarity `base(i, j) + offset`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.base(i, j) + self.offset
    }

    pub fn with_offset(&self, offset: f64) -> Self {
        Self {
            offset,
            ..self.clone()
        }
    }

    /// The matrix of the reversed pair `(l, k)`.
    pub fn transpose(&self) -> Self {
        let mut base = Vec::with_capacity(self.base.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                base.push(self.base(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            base,
            offset: self.offset,
        }
    }
}
