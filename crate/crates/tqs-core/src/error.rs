//! Shared error type for all numerical and protocol operations.

use thiserror::Error;

/// Errors surfaced by construction, decomposition and protocol routines.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator is not Hermitian (max asymmetry {residual:.3e} > tol {tol:.3e})")]
    NotHermitian { residual: f64, tol: f64 },

    #[error("symmetry violation: {0}")]
    SymmetryViolation(String),

    #[error("degenerate cluster has non-involutory restricted parity: {0}")]
    ParityResolution(String),

    #[error("sector solve failed: {0}")]
    SectorSolve(String),

    #[error("spectral estimation failed: {0}")]
    Music(String),

    #[error("linear algebra backend error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("LAPACK driver {driver} failed with info = {info}")]
    Lapack { driver: &'static str, info: i32 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed data: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
