use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector must have at least one entry")]
    EmptyVector,

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("matrix shape {rows}x{cols} does not match {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },

    #[error("Gram matrix is not positive definite (pivot {pivot} = {value:e}); rows are linearly dependent")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("{what} is undefined for the zero vector")]
    ZeroVector { what: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("iterate became non-finite at step {step}")]
    Diverged { step: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
