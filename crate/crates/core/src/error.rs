use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point has zero dimension")]
    ZeroDimension,

    #[error("non-finite coordinate at position {0}")]
    NonFinite(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("codebook centers {0} and {1} coincide")]
    DuplicateCenter(usize, usize),

    #[error("center index {index} out of range for k = {k}")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("bisector requires two distinct center indices, got {0} twice")]
    SameIndex(usize),

    #[error("a single-center codebook has an empty frontier")]
    SingleCenter,

    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weights must be positive and finite (atom {index}: {weight})")]
    InvalidWeight { index: usize, weight: f64 },

    #[error("weights sum to {sum}, expected 1 within 1e-12")]
    NotNormalized { sum: f64 },

    #[error("distribution {0} cannot be grid-discretized")]
    UnsupportedDistribution(String),

    #[error("cell has zero mass")]
    ZeroMass,

    #[error("k = {k} exceeds the number of distinct support atoms ({support})")]
    KExceedsSupport { k: usize, support: usize },

    #[error("exhaustive search over {n} atoms into {k} parts exceeds the combinatorial guard ({reason})")]
    TooLarge { n: usize, k: usize, reason: String },

    #[error("codebook sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("malformed {format} input at {location}: {message}")]
    Malformed {
        format: &'static str,
        location: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
