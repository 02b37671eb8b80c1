use thiserror::Error;

/// Errors raised while configuring or running the estimator and optimizers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("action {action} outside the interval [{lo}, {hi}]")]
    ActionOutOfRange { action: f64, lo: f64, hi: f64 },

    #[error("non-finite value in gradient estimate at step {step}")]
    NonFinite { step: usize },

    #[error("non-finite {what} at iteration {iteration}")]
    Numerical { what: String, iteration: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
