use crate::pattern::Pattern;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} outside the supported range 1..=24")]
    InvalidDimension(usize),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("pattern set is not an antichain: {0} and {1} are comparable")]
    NotAntichain(Pattern, Pattern),

    #[error("pattern {0} is unobservable (no available cases or compatible observed pattern)")]
    Unobservable(Pattern),

    #[error("no available cases")]
    NoAvailableCases,

    #[error("no complete cases")]
    NoCompleteCases,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("ordered Bell number B_{0} is outside the supported range 0..=24")]
    BellOverflow(usize),

    #[error("unsupported scenario/grid combination: {0}")]
    Unsupported(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Data {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HamError>;
