use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("drain rate must be positive, got {0}")]
    NonPositiveDrainRate(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("zero was not hit before the horizon cap {cap}")]
    HorizonExceeded { cap: f64 },

    #[error("minimizer did not converge after {iterations} iterations (bracket width {width})")]
    NoConvergence { iterations: usize, width: f64 },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("infeasible grid: expected hits {expected:.3} < {required} at u = {u}")]
    InfeasibleGrid { u: f64, expected: f64, required: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
