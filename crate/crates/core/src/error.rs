use thiserror::Error;

/// Errors surfaced by the modeling library.
#[derive(Debug, Error)]
pub enum ModelError {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameter container violates a stated invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A configuration is inconsistent (e.g. no root for the intensity grid).
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative numerical routine failed to converge.
    #[error("convergence failure: {0} (residual {residual:e})", residual = .1)]
    Convergence(String, f64),

    /// Internal consistency check failed (algebraic identity broken in floats).
    #[error("internal consistency error: {0}")]
    Inconsistent(String),

    /// Input data does not match the expected layout.
    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
