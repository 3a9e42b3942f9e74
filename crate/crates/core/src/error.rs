use std::io;

use thiserror::Error;

/// Errors produced by gallery ingestion, clustering, the objective and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: malformed record: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("duplicate image_id {0:?}")]
    DuplicateImage(String),

    #[error("duplicate instance ({0:?}, {1})")]
    DuplicateInstance(String, usize),

    #[error("image {image:?} instance {index}: dimension {found}, expected {expected}")]
    DimensionMismatch {
        image: String,
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("image {image:?} instance {index}: non-finite feature component")]
    NonFinite { image: String, index: usize },

    #[error("image {image:?} instance {index}: zero feature vector")]
    ZeroVector { image: String, index: usize },

    #[error(
        "image {image:?} instance {index}: feature norm {norm} deviates from 1 by more than 1e-3"
    )]
    NormOutOfTolerance {
        image: String,
        index: usize,
        norm: f64,
    },

    #[error("uniqueness violated: label {label:?} appears more than once in image {image:?}")]
    UniquenessViolated { image: String, label: String },

    #[error("gallery has no labeled persons")]
    Unlabeled,

    #[error("unknown instance ({0:?}, {1})")]
    UnknownInstance(String, usize),

    #[error("memory slot ({0:?}, {1}) is empty")]
    EmptySlot(String, usize),

    #[error("vector dimension {found} does not match store dimension {expected}")]
    Dimension { expected: usize, found: usize },

    #[error("memory update cancels out (f = -g); slot left unchanged")]
    DegenerateUpdate,

    #[error("target is not in the softmax population")]
    TargetOutsidePopulation,

    #[error("softmax population is empty")]
    EmptyPopulation,

    #[error("positive set is empty")]
    EmptyPositives,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("all queries were skipped (no relevant candidates)")]
    AllQueriesSkipped,

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by the caller's configuration or protocol choice
    /// rather than by the data or the environment.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Protocol(_) | Error::Unlabeled | Error::AllQueriesSkipped
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
