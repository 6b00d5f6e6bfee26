use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EfError {
    #[error("non-finite state at integration step {step}")]
    NonFinite { step: usize },
    #[error("particle left the stability region |Q| <= {guard} at step {step}")]
    Unstable { guard: f64, step: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("outside the domain of validity: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("eigenvalue problem failed: {0}")]
    Eigen(String),
}

pub type Result<T> = std::result::Result<T, EfError>;
