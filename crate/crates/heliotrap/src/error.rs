//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("grid format error: {0}")]
    GridFormat(String),

    #[error("grid geometry mismatch: {0}")]
    GridMismatch(String),

    #[error("no voltage configured for electrode '{0}'")]
    MissingVoltage(String),

    #[error("point ({0}, {1}) um is outside the interpolation interior")]
    OutOfDomain(f64, f64),

    #[error("iteration limit reached: {context} (residual {residual:e})")]
    Convergence { context: String, residual: f64 },

    #[error("numerical degeneracy: scale {0:e} is below the working floor")]
    Singularity(f64),

    #[error("no confined equilibrium found: {0}")]
    Unconfined(String),

    #[error("fit failure: {0}")]
    Fit(String),

    #[error("trace format error: {0}")]
    TraceFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
