//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide error enum. Variant names follow the failure they signal.
#[derive(Debug, Error)]
pub enum HkError {
    #[error("matrix is not symmetric: max |M - Mᵀ| = {defect:e} exceeds {tol:e}")]
    NotSymmetric { defect: f64, tol: f64 },

    #[error("real part of matrix is not positive definite (Cholesky failed)")]
    RealPartNotPD,

    #[error("matrix square root iteration did not converge: residual {residual:e}")]
    ConvergenceFailure { residual: f64 },

    #[error("branch seed inconsistent: |root² - w| = {defect:e} relative to |w|")]
    InconsistentSeed { defect: f64 },

    #[error("branch tracking hit a zero of the argument (|w| = {magnitude:e})")]
    ZeroCrossing { magnitude: f64 },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("non-finite state during integration ({0})")]
    NonFiniteState(String),

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("singular coherent frame: {0}")]
    SingularFrame(String),

    #[error("box too small: {0}")]
    BoxTooSmall(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("boundary mass {fraction:e} exceeds threshold {threshold:e}")]
    BoundaryMass { fraction: f64, threshold: f64 },

    #[error("config error: {0}")]
    ConfigError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HkError>;
