use std::io;

use thiserror::Error;

/// Errors raised by the factorization kernels, orthogonalization schemes,
/// problem generators and file readers.
#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky hit a pivot that is not safely positive. `step` is 1-based.
    #[error("non-positive pivot at Cholesky step {step}")]
    NonPositivePivot { step: usize },

    /// A triangular factor has an exactly zero diagonal entry (0-based index).
    #[error("triangular factor is singular at diagonal {index}")]
    SingularTriangular { index: usize },

    #[error("recursive CholQR discarded every column")]
    AllColumnsDiscarded,

    #[error("ambient dimension {ambient} must exceed sketch dimension {sketch}")]
    AmbientTooSmall { ambient: usize, sketch: usize },

    #[error("matrix is numerically rank deficient (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("MatrixMarket banner not supported: {0}")]
    Banner(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures caused by the numerics (loss of positive
    /// definiteness, rank collapse) rather than by bad input.
    pub fn is_breakdown(&self) -> bool {
        matches!(
            self,
            Error::NonPositivePivot { .. }
                | Error::SingularTriangular { .. }
                | Error::AllColumnsDiscarded
                | Error::RankDeficient { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
