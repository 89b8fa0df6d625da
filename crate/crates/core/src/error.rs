use thiserror::Error;

use crate::mdp::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(ValidationReport),
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action {0} does not exist")]
    InvalidAction(usize),
    #[error("state {0} does not exist")]
    InvalidState(usize),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("linear solve failed: residual {residual:e} exceeds {bound:e}")]
    NumericalFailure { residual: f64, bound: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
