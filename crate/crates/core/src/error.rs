use thiserror::Error;

use crate::model::PortfolioViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid asset `{name}`: {reason}")]
    InvalidAsset { name: String, reason: String },

    #[error("universe must contain at least one asset")]
    EmptyUniverse,

    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid portfolio: {0}")]
    Portfolio(#[from] PortfolioViolation),

    #[error("invalid expectation method: {0}")]
    InvalidMethod(String),

    #[error("integrand is not finite at eta = {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("asset {index} has zero variance")]
    ZeroVariance { index: usize },

    #[error("degenerate universe: {0}")]
    Degenerate(String),

    #[error("target {target} is not attainable: {reason}")]
    Unattainable { target: f64, reason: String },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("no root of `{0}` inside the search bracket")]
    NoRoot(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("failed to parse universe: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
