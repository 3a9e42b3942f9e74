//! Gallery domain types, the JSON Lines gallery format and the contextual
//! co-appearance statistics computed from ground-truth labels.
//!
//! A gallery is a list of scene images, each holding an ordered list of
//! detected persons. Every person carries a unit-norm embedding and an
//! optional identity label. Within one image no two persons may share a
//! label: a given identity is seen at most once per scene.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;

/// Reserved label string marking a person without a ground-truth identity.
pub const UNLABELED: &str = "UNLABELED";

/// Norm deviation below which an ingested vector is repaired by renormalizing.
pub const NORM_REPAIR_TOLERANCE: f64 = 1e-3;

/// Deviations smaller than this are left untouched so that saved galleries
/// reload bit-exactly.
const NORM_EXACT_TOLERANCE: f64 = 1e-12;

/// Position of a person in the gallery: the image it was detected in and its
/// ordinal within that image's instance list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstanceRef {
    pub image_id: String,
    pub index: usize,
}

impl InstanceRef {
    pub fn new(image_id: impl Into<String>, index: usize) -> Self {
        Self {
            image_id: image_id.into(),
            index,
        }
    }
}

impl fmt::Display for InstanceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.image_id, self.index)
    }
}

// Serialized as a two-element array `[image_id, index]`.
impl Serialize for InstanceRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        (&self.image_id, self.index).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InstanceRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (image_id, index) = <(String, usize)>::deserialize(deserializer)?;
        Ok(Self { image_id, index })
    }
}

/// Ground-truth identity of a person.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Identity(String),
    Unlabeled,
}

impl Label {
    pub fn identity(name: impl Into<String>) -> Self {
        let name = name.into();
        if name == UNLABELED {
            Label::Unlabeled
        } else {
            Label::Identity(name)
        }
    }

    pub fn from_option(label: Option<String>) -> Self {
        label.map_or(Label::Unlabeled, Label::identity)
    }

    pub fn as_identity(&self) -> Option<&str> {
        match self {
            Label::Identity(name) => Some(name),
            Label::Unlabeled => None,
        }
    }

    pub fn is_labeled(&self) -> bool {
        matches!(self, Label::Identity(_))
    }

    /// Two labels denote the same person only when both are real identities.
    pub fn matches(&self, other: &Label) -> bool {
        match (self, other) {
            (Label::Identity(a), Label::Identity(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PersonInstance {
    pub id: InstanceRef,
    pub feature: Vec<f64>,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GalleryImage {
    pub image_id: String,
    pub camera_id: Option<String>,
    pub instances: Vec<PersonInstance>,
}

impl GalleryImage {
    /// Builds an image from `(label, feature)` pairs; indices are positional.
    pub fn new(
        image_id: impl Into<String>,
        camera_id: Option<String>,
        persons: impl IntoIterator<Item = (Label, Vec<f64>)>,
    ) -> Self {
        let image_id = image_id.into();
        let instances = persons
            .into_iter()
            .enumerate()
            .map(|(index, (label, feature))| PersonInstance {
                id: InstanceRef::new(image_id.clone(), index),
                feature,
                label,
            })
            .collect();
        Self {
            image_id,
            camera_id,
            instances,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    fn identities(&self) -> HashSet<&str> {
        self.instances
            .iter()
            .filter_map(|p| p.label.as_identity())
            .collect()
    }
}

/// A validated set of gallery images sharing one embedding dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Gallery {
    images: Vec<GalleryImage>,
    dim: usize,
    positions: HashMap<String, usize>,
}

impl Gallery {
    /// Validates `images` and repairs slightly denormalized features.
    ///
    /// Instance ids are rewritten from the image id and position, so callers
    /// may leave them inconsistent. The dimension is taken from the first
    /// instance; a gallery without instances has dimension 0.
    pub fn from_images(mut images: Vec<GalleryImage>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(images.len());
        for (pos, image) in images.iter().enumerate() {
            if positions.insert(image.image_id.clone(), pos).is_some() {
                return Err(Error::DuplicateImage(image.image_id.clone()));
            }
        }

        let dim = images
            .iter()
            .flat_map(|im| im.instances.first())
            .map(|p| p.feature.len())
            .next()
            .unwrap_or(0);

        for image in &mut images {
            let mut seen = HashSet::new();
            for (index, person) in image.instances.iter_mut().enumerate() {
                person.id = InstanceRef::new(image.image_id.clone(), index);
                repair_feature(&image.image_id, index, dim, &mut person.feature)?;
                if let Label::Identity(name) = &person.label {
                    if !seen.insert(name.clone()) {
                        return Err(Error::UniquenessViolated {
                            image: image.image_id.clone(),
                            label: name.clone(),
                        });
                    }
                }
            }
        }

        Ok(Self {
            images,
            dim,
            positions,
        })
    }

    pub fn images(&self) -> &[GalleryImage] {
        &self.images
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_instances(&self) -> usize {
        self.images.iter().map(GalleryImage::len).sum()
    }

    pub fn image_position(&self, image_id: &str) -> Option<usize> {
        self.positions.get(image_id).copied()
    }

    pub fn image(&self, image_id: &str) -> Option<&GalleryImage> {
        self.image_position(image_id).map(|pos| &self.images[pos])
    }

    pub fn get(&self, id: &InstanceRef) -> Option<&PersonInstance> {
        self.image(&id.image_id)?.instances.get(id.index)
    }

    /// All persons in gallery order (image order, then index).
    pub fn instances(&self) -> impl Iterator<Item = &PersonInstance> {
        self.images.iter().flat_map(|im| im.instances.iter())
    }

    pub fn has_labels(&self) -> bool {
        self.instances().any(|p| p.label.is_labeled())
    }
}

fn repair_feature(image: &str, index: usize, dim: usize, feature: &mut [f64]) -> Result<()> {
    if feature.len() != dim {
        return Err(Error::DimensionMismatch {
            image: image.to_owned(),
            index,
            expected: dim,
            found: feature.len(),
        });
    }
    if feature.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            image: image.to_owned(),
            index,
        });
    }
    let norm = linalg::norm(feature);
    if norm == 0.0 {
        return Err(Error::ZeroVector {
            image: image.to_owned(),
            index,
        });
    }
    let deviation = (norm - 1.0).abs();
    if deviation > NORM_REPAIR_TOLERANCE {
        return Err(Error::NormOutOfTolerance {
            image: image.to_owned(),
            index,
            norm,
        });
    }
    if deviation > NORM_EXACT_TOLERANCE {
        feature.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ImageRecord {
    image_id: String,
    #[serde(default)]
    camera_id: Option<String>,
    instances: Vec<InstanceRecord>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    #[serde(default)]
    label: Option<String>,
    feature: Vec<f64>,
}

/// Reads a gallery from JSON Lines, one image per line. Blank lines are ignored.
pub fn read_gallery<R: Read>(reader: R) -> Result<Gallery> {
    let mut images = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ImageRecord = serde_json::from_str(&line).map_err(|source| Error::Parse {
            line: lineno + 1,
            source,
        })?;
        images.push(GalleryImage::new(
            record.image_id,
            record.camera_id,
            record
                .instances
                .into_iter()
                .map(|r| (Label::from_option(r.label), r.feature)),
        ));
    }
    Gallery::from_images(images)
}

pub fn load_gallery(path: impl AsRef<Path>) -> Result<Gallery> {
    read_gallery(File::open(path)?)
}

/// Writes `gallery` as JSON Lines. Unlabeled persons are written with a null label.
pub fn write_gallery<W: Write>(writer: W, gallery: &Gallery) -> Result<()> {
    let mut out = BufWriter::new(writer);
    for image in gallery.images() {
        let record = ImageRecord {
            image_id: image.image_id.clone(),
            camera_id: image.camera_id.clone(),
            instances: image
                .instances
                .iter()
                .map(|p| InstanceRecord {
                    label: p.label.as_identity().map(str::to_owned),
                    feature: p.feature.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_gallery(path: impl AsRef<Path>, gallery: &Gallery) -> Result<()> {
    write_gallery(File::create(path)?, gallery)
}

/// The smaller of the two images' person counts: the largest number of
/// person pairs that can possibly be matched between them.
pub fn matching_capacity(a: &GalleryImage, b: &GalleryImage) -> usize {
    a.len().min(b.len())
}

/// Image pairs sharing exactly one identity versus two or more.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CapacityBin {
    pub single: usize,
    pub multiple: usize,
}

impl CapacityBin {
    pub fn total(&self) -> usize {
        self.single + self.multiple
    }

    pub fn multiple_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.multiple as f64 / self.total() as f64
        }
    }
}

/// Histogram of positive image pairs keyed by matching capacity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoAppearanceStats {
    pub bins: BTreeMap<usize, CapacityBin>,
}

impl CoAppearanceStats {
    pub fn total_pairs(&self) -> usize {
        self.bins.values().map(CapacityBin::total).sum()
    }
}

/// Counts, per matching capacity, the unordered image pairs that share one
/// labeled identity and those that share several. Pairs sharing none are
/// left out.
pub fn coappearance_stats(gallery: &Gallery) -> Result<CoAppearanceStats> {
    if !gallery.has_labels() {
        return Err(Error::Unlabeled);
    }
    let identities: Vec<HashSet<&str>> =
        gallery.images().iter().map(|im| im.identities()).collect();
    let mut stats = CoAppearanceStats::default();
    for (k, a) in gallery.images().iter().enumerate() {
        for (l, b) in gallery.images().iter().enumerate().skip(k + 1) {
            let shared = identities[k].intersection(&identities[l]).count();
            if shared == 0 {
                continue;
            }
            let bin = stats.bins.entry(matching_capacity(a, b)).or_default();
            if shared == 1 {
                bin.single += 1;
            } else {
                bin.multiple += 1;
            }
        }
    }
    Ok(stats)
}

/// Labeled identities of a gallery, sorted.
pub fn identities(gallery: &Gallery) -> BTreeSet<&str> {
    gallery
        .instances()
        .filter_map(|p| p.label.as_identity())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(x: f64, y: f64) -> Vec<f64> {
        let n = (x * x + y * y).sqrt();
        vec![x / n, y / n]
    }

    fn image(id: &str, labels: &[&str]) -> GalleryImage {
        GalleryImage::new(
            id,
            None,
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| (Label::identity(*l), unit(1.0, i as f64))),
        )
    }

    #[test]
    fn loads_well_formed_file() {
        let text = r#"{"image_id":"a","camera_id":"c1","instances":[{"label":"p1","feature":[1.0,0.0]},{"label":null,"feature":[0.0,1.0]}]}
{"image_id":"b","camera_id":null,"instances":[{"feature":[0.6,0.8]}]}
"#;
        let g = read_gallery(text.as_bytes()).unwrap();
        assert_eq!(g.num_images(), 2);
        assert_eq!(g.num_instances(), 3);
        assert_eq!(g.dim(), 2);
        assert_eq!(g.images()[1].instances[0].label, Label::Unlabeled);
        assert_eq!(g.images()[1].camera_id, None);
        assert_eq!(
            g.get(&InstanceRef::new("a", 1)).unwrap().feature,
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn renormalizes_small_deviation() {
        let text = r#"{"image_id":"a","instances":[{"label":"p1","feature":[0.9995,0.0]}]}"#;
        let g = read_gallery(text.as_bytes()).unwrap();
        let f = &g.images()[0].instances[0].feature;
        assert!((linalg::norm(f) - 1.0).abs() < 1e-6);
        assert_eq!(f[0], 1.0);
    }

    #[test]
    fn rejects_ingestion_errors() {
        let cases = [
            (
                r#"{"image_id":"a","instances":[{"label":"p7","feature":[1,0]},{"label":"p7","feature":[0,1]}]}"#,
                "uniqueness violated",
            ),
            (
                r#"{"image_id":"a","instances":[{"feature":[0.5,0.0]}]}"#,
                "deviates",
            ),
            (
                r#"{"image_id":"a","instances":[{"feature":[0.0,0.0]}]}"#,
                "zero feature",
            ),
            (
                r#"{"image_id":"a","instances":[{"feature":[1.0,0.0]},{"feature":[1.0,0.0,0.0]}]}"#,
                "dimension",
            ),
            (
                "{\"image_id\":\"a\",\"instances\":[]}\n{\"image_id\":\"a\",\"instances\":[]}",
                "duplicate image_id",
            ),
            (
                r#"{"image_id":"a","instances":[{"feature":[1.0,"x"]}]}"#,
                "malformed",
            ),
        ];
        for (text, expected) in cases {
            let err = read_gallery(text.as_bytes()).unwrap_err().to_string();
            assert!(
                err.contains(expected),
                "{err:?} should mention {expected:?}"
            );
        }
    }

    #[test]
    fn rejects_non_finite() {
        let images = vec![GalleryImage::new(
            "a",
            None,
            [(Label::Unlabeled, vec![f64::NAN, 1.0])],
        )];
        assert!(matches!(
            Gallery::from_images(images),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn sentinel_string_is_unlabeled() {
        assert_eq!(Label::identity(UNLABELED), Label::Unlabeled);
        let images = vec![GalleryImage::new(
            "a",
            None,
            [
                (Label::identity(UNLABELED), vec![1.0, 0.0]),
                (Label::Unlabeled, vec![0.0, 1.0]),
            ],
        )];
        // Two unlabeled persons never violate uniqueness.
        assert!(Gallery::from_images(images).is_ok());
    }

    #[test]
    fn capacity_is_min_and_symmetric() {
        let a = image("a", &["p1", "p2", "p3"]);
        let b = image("b", &["p1", "p2", "p3", "p4", "p5"]);
        let empty = image("e", &[]);
        assert_eq!(matching_capacity(&a, &b), 3);
        assert_eq!(matching_capacity(&b, &a), 3);
        assert_eq!(matching_capacity(&empty, &b), 0);
        assert_eq!(matching_capacity(&a, &a), 3);
    }

    #[test]
    fn stats_single_and_multiple() {
        let g = Gallery::from_images(vec![
            image("a", &["p1", "p9"]),
            image("b", &["p1", "p2", "p3"]),
        ])
        .unwrap();
        let stats = coappearance_stats(&g).unwrap();
        assert_eq!(
            stats.bins[&2],
            CapacityBin {
                single: 1,
                multiple: 0
            }
        );

        let g = Gallery::from_images(vec![image("a", &["p1", "p2"]), image("b", &["p2", "p1"])])
            .unwrap();
        let stats = coappearance_stats(&g).unwrap();
        assert_eq!(
            stats.bins[&2],
            CapacityBin {
                single: 0,
                multiple: 1
            }
        );
    }

    #[test]
    fn stats_requires_labels() {
        let g = Gallery::from_images(vec![GalleryImage::new(
            "a",
            None,
            [(Label::Unlabeled, vec![1.0])],
        )])
        .unwrap();
        assert!(matches!(coappearance_stats(&g), Err(Error::Unlabeled)));
    }

    #[test]
    fn unlabeled_never_counts_as_shared() {
        let a = GalleryImage::new(
            "a",
            None,
            [
                (Label::Unlabeled, vec![1.0]),
                (Label::identity("p"), vec![1.0]),
            ],
        );
        let b = GalleryImage::new("b", None, [(Label::Unlabeled, vec![1.0])]);
        let g = Gallery::from_images(vec![a, b]).unwrap();
        assert_eq!(coappearance_stats(&g).unwrap().total_pairs(), 0);
    }
}
