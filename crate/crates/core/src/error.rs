use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hard gates are non-differentiable; freeze gates or use SOFT")]
    HardGatesNotDifferentiable,

    #[error("{0} has no gates")]
    NoGates(&'static str),

    #[error("operation requires a DLGN variant, got {0}")]
    NotLinearlyGated(&'static str),

    #[error("path enumeration of {count} paths exceeds the cap of {cap}")]
    PathCapExceeded { count: u128, cap: u64 },

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("trace must be positive for normalization, got {0}")]
    NonPositiveTrace(f64),

    #[error("region {0} has no members")]
    EmptyRegion(&'static str),

    #[error("{path}: bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated IDX file, need {needed} bytes but found {found}")]
    Truncated { path: PathBuf, needed: usize, found: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("class {0} has no training images")]
    MissingClass(u8),

    #[error("cannot form {k} clusters from {points} points")]
    TooManyClusters { k: usize, points: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("oracle tolerance violated: {0}")]
    OracleViolation(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used for machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::HardGatesNotDifferentiable => "hard_gates_not_differentiable",
            Error::NoGates(_) => "no_gates",
            Error::NotLinearlyGated(_) => "not_linearly_gated",
            Error::PathCapExceeded { .. } => "path_cap_exceeded",
            Error::Diverged { .. } => "diverged",
            Error::NonPositiveTrace(_) => "non_positive_trace",
            Error::EmptyRegion(_) => "empty_region",
            Error::BadMagic { .. } => "bad_magic",
            Error::Truncated { .. } => "truncated",
            Error::CountMismatch { .. } => "count_mismatch",
            Error::MissingClass(_) => "missing_class",
            Error::TooManyClusters { .. } => "too_many_clusters",
            Error::Config(_) => "config",
            Error::OracleViolation(_) => "oracle_violation",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Json(_) => "json",
        }
    }
}
