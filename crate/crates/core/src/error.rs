use thiserror::Error;

/// Errors raised by the design, filtering and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no stable invariant distribution: {0}")]
    NoInvariantDistribution(String),

    #[error("zero-probability symbol {symbol} (cell mass {mass:e})")]
    ZeroProbabilitySymbol { symbol: usize, mass: f64 },

    #[error("mismatched belief domains")]
    MismatchedDomains,

    #[error("invalid cell index {index} for a {levels}-level quantizer")]
    InvalidCell { index: usize, levels: usize },

    #[error("empty classification: point falls in no cell of the hyperplane arrangement")]
    EmptyClassification,

    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(String),

    #[error("infeasible candidate specification: {0}")]
    InfeasibleSpec(String),

    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),

    #[error("node budget of {budget} exceeded after {nodes} nodes (best known upper bound {upper_bound:?})")]
    BudgetExceeded {
        budget: usize,
        nodes: usize,
        upper_bound: Option<f64>,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("encoder and decoder beliefs desynchronized at t = {t}")]
    BeliefDesync { t: u64 },

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("schedule/solution mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("empty histogram")]
    EmptyHistogram,

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_)
                | Error::NoInvariantDistribution(_)
                | Error::InvalidQuantizer(_)
                | Error::InfeasibleSpec(_)
                | Error::InvalidHorizon(_)
                | Error::InstanceTooLarge(_)
                | Error::ScheduleMismatch(_)
                | Error::InvalidSchedule(_)
                | Error::InvalidPolicy(_)
                | Error::Config(_)
                | Error::Json(_)
        )
    }

    /// Process exit status: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_config_error() {
            2
        } else {
            1
        }
    }
}
