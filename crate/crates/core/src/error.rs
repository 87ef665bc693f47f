use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{op} does not support {family} targets")]
    UnsupportedFamily { op: &'static str, family: &'static str },

    #[error("required constant `{0}` is unknown")]
    UnknownConstant(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("step size h = {h} loses contraction of the affine recursion (need h < {bound})")]
    ContractionLost { h: f64, bound: f64 },

    #[error("covariance lost positive definiteness at step {step}: {reason}")]
    LostDefiniteness { step: usize, reason: String },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("missing score table entry for time index {0}")]
    MissingTableEntry(usize),

    #[error("malformed sample bank: {0}")]
    MalformedBank(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
