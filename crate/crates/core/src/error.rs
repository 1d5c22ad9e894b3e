use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0} (must be 1, 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid too small: axis {axis} has {n} samples, need at least {min}")]
    GridTooSmall { axis: usize, n: usize, min: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("sample count mismatch: header declares {expected}, found {got}")]
    CountMismatch { expected: usize, got: usize },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("truncated payload: expected {expected} samples, found {got}")]
    Truncated { expected: usize, got: usize },

    #[error("tau must be positive and finite, got {0}")]
    InvalidTau(f64),

    #[error("gradient bound must be positive, got {0}")]
    InvalidGradBound(f64),

    #[error(
        "nyquist violation on axis {axis}: representable |u| is {range:.6}, need at least {required:.6}"
    )]
    Nyquist { axis: usize, range: f64, required: f64 },

    #[error("region outside covered gradient range: {0}")]
    RegionOutOfRange(String),

    #[error("density undefined at u = {u:?}: stationary point with |det H| = {det:e}")]
    UndefinedDensity { u: Vec<f64>, det: f64 },

    #[error("near-singular matrix: |det| = {det:e}")]
    SingularMatrix { det: f64 },

    #[error("index {index} out of range for {len} stationary points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("bin grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
