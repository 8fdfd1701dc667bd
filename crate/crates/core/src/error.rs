use thiserror::Error;

/// Errors raised by model validation, simulation, estimation and search.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),

    #[error("plan needs {requested} path steps, budget is {budget}")]
    BudgetExceeded { requested: u64, budget: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("array length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid cost: {0}")]
    InvalidCost(String),

    #[error("bracket expansion failed after {doublings} doublings: slope condition {condition} appears violated ({detail})")]
    BracketExpansion {
        doublings: usize,
        condition: &'static str,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
