//! Error types shared across the crate.

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("explanation does not match segmentation: {0}")]
    SegmentationMismatch(String),

    #[error(transparent)]
    Bridge(#[from] BridgeError),

    #[error("probability row {row} sums to {sum}, expected 1")]
    Normalization { row: usize, sum: f64 },

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("no class has both positive and negative samples")]
    NoValidClass,

    #[error("classifier has {classifier} classes but dataset has {dataset}")]
    ClassCountMismatch { classifier: usize, dataset: usize },

    #[error("malformed csv {path} line {line}: {reason}")]
    MalformedCsv {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("unknown class {class_id} in {path} line {line} (expected < {num_classes})")]
    UnknownClass {
        path: PathBuf,
        line: u64,
        class_id: usize,
        num_classes: usize,
    },

    #[error("class {0} has no items")]
    EmptyClass(usize),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures talking to a black-box classifier.
#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("transport failure: {0}")]
    Transport(String),

    #[error("malformed response line {line:?}: {reason}")]
    Malformed { line: String, reason: String },

    #[error("timed out after {0:?}")]
    Timeout(Duration),

    #[error("response id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },

    #[error("classifier reported error: {0}")]
    Remote(String),

    #[error("classifier returned {got} rows for {expected} images")]
    RowCount { expected: usize, got: usize },

    #[error("classifier returned a row of width {got}, expected {expected}")]
    RowWidth { expected: usize, got: usize },

    #[error("classifier rejected input: {0}")]
    Rejected(String),
}
