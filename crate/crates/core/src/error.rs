use thiserror::Error;

/// Errors raised across the library.
///
/// The variants group into three families that the CLI maps onto exit codes:
/// contract/validation failures, numerical failures, and guard refusals.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration at `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("insufficient boundary coverage: need at least {required} points, got {got}")]
    InsufficientCoverage { required: usize, got: usize },

    #[error("dense Hessian guard exceeded: {params} parameters > limit {limit}; shrink the model")]
    GuardExceeded { params: usize, limit: usize },

    #[error("Hessian remained singular after {escalations} damping escalations (last lambda {lambda:e})")]
    SingularHessian { escalations: usize, lambda: f64 },

    #[error("stale Hessian: assembled at params {expected}, queried with {found}")]
    StaleHessian { expected: String, found: String },

    #[error("non-finite loss encountered at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        last_finite: Vec<f64>,
    },

    #[error("indicator undefined: influence row has zero total mass")]
    UndefinedIndicator,

    #[error("retraining oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
