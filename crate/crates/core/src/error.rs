use thiserror::Error;

use crate::search::LineSearchTrial;

#[derive(Debug, Error)]
pub enum OdcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The closed loop `A - BKC` has an eigenvalue on or right of the stability margin.
    #[error("not-stabilizing: spectral abscissa {abscissa:.6e}")]
    NotStabilizing { abscissa: f64 },

    /// The Kronecker system of a Lyapunov solve is (numerically) singular, which
    /// happens when an iterate sits on the stability boundary.
    #[error("lyapunov-singular: condition estimate {condition:.3e}")]
    LyapunovSingular { condition: f64 },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("degenerate step: {0}")]
    DegenerateStep(String),

    #[error("line-search-failed after {} trials", trials.len())]
    LineSearchFailed { trials: Vec<LineSearchTrial> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sampling-failure: no stabilizing point in {attempts} draws (acceptance rate estimate < {rate_bound:.3e})")]
    SamplingFailure { attempts: usize, rate_bound: f64 },

    #[error("unsupported-dimension: {free} free entries, at most {limit} supported")]
    UnsupportedDimension { free: usize, limit: usize },

    #[error("out-of-atlas: point lies outside the atlas box")]
    OutOfAtlas,

    #[error("malformed document: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OdcError>;
