use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("mode index {mode} out of range for a {order}-mode tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dense materialization of size {size} exceeds the cap of {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("non-positive diagonal field entry {value} at variable {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("non-finite value encountered during sweep {sweep}")]
    NonFinite { sweep: usize },

    #[error("degenerate coordinate ({mode}, {row}, {col}): both variables are identically zero")]
    DegenerateCoordinate { mode: usize, row: usize, col: usize },

    #[error("malformed tensor file at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
