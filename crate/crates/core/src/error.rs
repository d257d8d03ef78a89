use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{context} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
        /// Coefficients of the last iterate.
        last_iterate: Vec<f64>,
        /// Residual after each iteration.
        trace: Vec<f64>,
    },

    #[error("path diverged at step {step} (t = {time})")]
    Diverged { step: usize, time: f64 },

    #[error("energy diverged: {0}")]
    DivergedEnergy(String),

    #[error("fixed-point iteration is not contracting (ratios {ratios:?})")]
    NonContraction { ratios: Vec<f64> },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("estimator failed: {0}")]
    Estimator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
