use thiserror::Error;

use crate::solver::InfeasibilityCertificate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("problem is infeasible (max violation {:.3e})", .0.max_violation)]
    Infeasible(Box<InfeasibilityCertificate>),

    #[error("budget exceeded after {completed} of {total} items")]
    BudgetExceeded { completed: u64, total: u64 },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
