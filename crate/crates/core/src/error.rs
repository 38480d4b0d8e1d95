use thiserror::Error;

/// Errors surfaced by the simulator and analysis engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// A scheduler proposed a transfer that violates the port feasibility
    /// constraints. This is a hard fault, never silently corrected.
    #[error("infeasible transfer at ({input},{output}): {reason}")]
    InfeasibleTransfer {
        input: usize,
        output: usize,
        reason: String,
    },

    #[error("exact chain analysis is limited to n <= {max}: got n = {n}; use Monte Carlo estimation for larger switches")]
    ExactModeTooLarge { n: usize, max: usize },

    #[error("transition matrix is not reversible: max detailed-balance residual {residual:.3e}")]
    NotReversible { residual: f64 },

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
