//! Context-aware unsupervised clustering for person search.
//!
//! The crate works on precomputed unit-norm person embeddings grouped by the
//! scene image they were detected in. It provides:
//!
//! - [`gallery`]: domain types, the JSON Lines gallery format and
//!   co-appearance statistics;
//! - [`store`]: the per-person feature memory and cosine similarity;
//! - [`hnm`]: hard negative mining by winner-take-all with a backward
//!   cycle-consistency check;
//! - [`hpm`]: hard positive mining by co-appearance similarity shifting;
//! - [`objective`]: the memory-bank re-identification loss and its gradient;
//! - [`evaluation`]: regular and multi-view gallery protocols, mAP and Top-k;
//! - [`synth`]: a seeded synthetic gallery generator.
//!
//! ```
//! use person_cluster::{hpm, store::FeatureStore, synth};
//!
//! let gallery = synth::generate(&synth::SynthConfig {
//!     noise_sigma: 0.0,
//!     orthogonal: true,
//!     dim: 32,
//!     ..Default::default()
//! })?;
//! let store = FeatureStore::from_gallery(&gallery)?;
//! let state = hpm::run_hpm(&store, hpm::HpmConfig::default())?;
//! assert_eq!(state.termination, hpm::Termination::Fixpoint);
//! # Ok::<(), person_cluster::Error>(())
//! ```

pub mod config;
pub mod error;
pub mod evaluation;
pub mod gallery;
pub mod hnm;
pub mod hpm;
mod linalg;
pub mod objective;
pub mod store;
pub mod synth;

pub use config::ClusteringConfig;
pub use error::{Error, Result};
pub use gallery::{Gallery, GalleryImage, InstanceRef, Label, PersonInstance};
pub use hnm::{MatchMode, PairOffsets, PositiveSets};
pub use store::{FeatureStore, SimilarityMatrix};
