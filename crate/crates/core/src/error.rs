use thiserror::Error;

use crate::model::{FactoredControl, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("stage {stage} is outside the horizon {horizon}")]
    UnknownStage { stage: usize, horizon: usize },

    #[error("state {state} is not a state of stage {stage}")]
    UnknownState { stage: usize, state: usize },

    #[error("control {control} is not feasible at state {state} (stage {stage})")]
    InfeasibleControl {
        stage: usize,
        state: usize,
        control: FactoredControl,
    },

    #[error("value function has no entry for successor {state} at stage {stage}")]
    MissingValue { stage: usize, state: usize },

    #[error("value function has length {actual}, expected {expected}")]
    ValueLength { expected: usize, actual: usize },

    #[error("policy covers {actual} entries, expected {expected}")]
    PolicyShape { expected: usize, actual: usize },

    #[error("invalid agent order {order:?} for {agents} agents")]
    InvalidOrder { order: Vec<usize>, agents: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("rollout policy tabulation requires the exact Q-factor evaluator")]
    ExactEvaluatorRequired,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("model failed validation:\n{0}")]
    Validation(ValidationReport),
}
