//! Crate-wide error type.
//!
//! Numerical preconditions (aliasing headroom, partition-of-unity defects,
//! compatibility of shell test functions) are all construction-time errors so
//! that downstream computations never silently operate on invalid data.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("aliasing violation: {0}")]
    Aliasing(String),

    #[error("under-resolved concentration: {0}")]
    UnderResolved(String),

    #[error("test function is not smooth enough: {0}")]
    NotSmooth(String),

    #[error("declared support violated: {0}")]
    SupportViolated(String),

    #[error("compatibility violated on {side}: max deviation {deviation:.3e} exceeds {tol:.3e}")]
    Compatibility {
        side: &'static str,
        deviation: f64,
        tol: f64,
    },

    #[error("zero frequency has no direction; the origin is excluded from the shell")]
    ZeroFrequency,

    #[error("partition of unity defect {deviation:.3e} exceeds {tol:.3e}")]
    PartitionDefect { deviation: f64, tol: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid bins: {0}")]
    InvalidBins(String),

    #[error("weak limit unknown: {0}")]
    WeakLimitUnknown(String),

    #[error("sequence must be centered first: {0}")]
    NotCentered(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
