//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A prior, trace, or parameter failed construction-time validation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A forecast was requested after a history the theory assigns zero mass.
    #[error("forecast undefined: history has zero probability under the prior")]
    ZeroMassHistory,

    /// A posterior update conditioned on an outcome of probability zero.
    #[error("posterior undefined: observed outcome has probability zero under the prior")]
    ZeroMassOutcome,

    /// The empirical mean of an empty realization was requested.
    #[error("empirical mean undefined for an empty realization")]
    EmptyRealization,

    /// Moment recovery produced a value incompatible with any exchangeable
    /// theory: the forecasts are not exchangeable-consistent.
    #[error("inconsistent trace: recovered moment m_{index} = {value} outside [{lo}, {hi}] (tolerance {tol})")]
    InconsistentTrace {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
        tol: f64,
    },

    /// Grid reconstruction could not fit the moment vector within the
    /// configured feasibility threshold.
    #[error("infeasible moments: best squared mismatch {mismatch} exceeds threshold {threshold}")]
    InfeasibleMoments { mismatch: f64, threshold: f64 },

    /// A test or region was configured with out-of-range parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Exact pass-probability enumeration requested beyond the horizon cap.
    #[error("horizon {horizon} too large for exact enumeration (cap {cap})")]
    HorizonTooLarge { horizon: usize, cap: usize },

    /// A precondition of a higher-level demonstration failed.
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    /// Experiment configuration rejected, with the offending field path.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to: config errors exit 2,
    /// everything else exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParams(_) | Error::InvalidInput(_) => 2,
            _ => 1,
        }
    }
}
