use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin j = {0}: must be a positive multiple of 1/2")]
    InvalidSpin(f64),

    #[error("order N = {order} exceeds the configured cap {cap}")]
    OrderAboveCap { order: usize, cap: usize },

    #[error("m = {m} is out of range for j = {j}")]
    InvalidMagneticNumber { j: f64, m: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("tensor entry {counts:?} has imaginary residue {residue:e}")]
    ImaginaryResidue { counts: [u8; 4], residue: f64 },

    #[error("expected a unit vector, got norm {0}")]
    NonUnitVector(f64),

    #[error("Gram matrix is not positive semi-definite (pivot {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
