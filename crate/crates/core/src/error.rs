use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Scenario or experiment configuration is malformed.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The inputs fall outside the regime an operation is defined for; the
    /// caller should use the general solver instead.
    #[error("regime error: {0}")]
    Regime(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    /// An iterative method stopped without meeting its tolerance.
    #[error("solver did not converge: {message} (best residual {residual:e})")]
    Solver { message: String, residual: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
