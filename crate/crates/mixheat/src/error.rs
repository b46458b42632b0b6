//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MixheatError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("field contains non-finite values ({context})")]
    NonFinite { context: &'static str },

    #[error("grid too small: boundary value {boundary:.3e} exceeds tail tolerance {tol:.3e}")]
    GridTooSmall { boundary: f64, tol: f64 },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("Picard iteration diverged (step must be rejected)")]
    PicardDiverged,

    #[error("eigensolver did not converge after {sweeps} sweeps (residual {residual:.3e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    #[error("unsupported domain kind: {0}")]
    UnsupportedDomain(String),

    #[error("fewer than {needed} doublings observed ({got})")]
    TooFewDoublings { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MixheatError>;
