use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    /// The exhaustive search would need more support evaluations than allowed.
    #[error("enumeration budget exceeded: {required} supports required, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("operation requires a planted instance, got a pure-noise instance")]
    NotPlanted,

    /// The ratio window of the limiting curve does not fit in (0, 1).
    #[error("overlap window is vacuous at these parameters (ratio window [{lo}, {hi}] leaves (0, 1))")]
    VacuousWindow { lo: f64, hi: f64 },

    #[error("malformed instance file: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}
