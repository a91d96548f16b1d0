use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported audio encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("{path} contains no audio samples")]
    EmptyAudio { path: PathBuf },

    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("clip has {samples} samples, shorter than one {window}-sample analysis window")]
    ClipTooShort { samples: usize, window: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} frames to train {needed} components, got {got}")]
    TooFewFrames { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("relevance factor must be positive, got {0}")]
    InvalidRelevance(f64),

    #[error("chi-square kernel requires nonnegative features, found {value} at index {index}")]
    NegativeFeature { index: usize, value: f64 },

    #[error("Gram matrix is not symmetric at ({row}, {col})")]
    NonSymmetricGram { row: usize, col: usize },

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("SMO did not reach tolerance after {iterations} iterations (violation {violation})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("class has {count} examples, cannot stratify into {folds} folds")]
    ClassTooSmall { count: usize, folds: usize },

    #[error("event '{0}' has no clips in the training folds")]
    EventAbsent(String),

    #[error("scored set has no positive examples")]
    NoPositives,

    #[error("scored set has no negative examples")]
    NoNegatives,

    #[error("DET curve needs at least two points, got {0}")]
    CurveTooShort(usize),

    #[error("event '{0}' is missing from the category map")]
    UnknownEvent(String),

    #[error("score sets cover different clips or labels: {0}")]
    MismatchedScoreSets(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("malformed {kind} file {path}: {detail}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("fold {fold}, event '{event}': {source}")]
    Stage {
        fold: u8,
        event: String,
        #[source]
        source: Box<Error>,
    },

    #[error("clip '{clip}': {source}")]
    Clip {
        clip: String,
        #[source]
        source: Box<Error>,
    },

    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(kind: &'static str, path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Error::Format {
            kind,
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}
