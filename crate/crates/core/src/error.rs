use thiserror::Error;

use crate::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(ValidationReport),

    #[error("action {action} is not feasible in state {state} at stage {stage}")]
    InfeasibleAction {
        stage: usize,
        state: usize,
        action: usize,
    },

    #[error("policy space has {count} policies, above the enumeration limit of {limit}")]
    PolicySpaceTooLarge { count: u128, limit: u128 },

    #[error("state space has {count} states, above the limit of {limit}")]
    StateSpaceTooLarge { count: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
