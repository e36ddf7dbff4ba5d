//! Multiagent rollout and agent-by-agent policy iteration for stochastic
//! control problems whose control is a tuple of per-agent components.
//!
//! * [`model`]: finite-horizon and discounted models, factored controls,
//!   policies and validation.
//! * [`dp`]: exact dynamic programming used as ground truth.
//! * [`rollout`]: standard, multiagent and uncoordinated rollout.
//! * [`pi`]: standard and agent-by-agent policy iteration.
//! * [`expand`]: the one-agent-at-a-time reformulation.
//! * [`env`]: pursuit environments, counterexamples and random instances.

pub mod dp;
pub mod env;
pub mod error;
pub mod expand;
pub mod model;
pub mod pi;
pub mod rollout;

pub use error::{Error, Result};
pub use model::{
    AgentOrder, DiscountedMdp, FactoredControl, FactoredPolicy, FiniteHorizonModel, OrderSchedule,
    StationaryPolicy,
};
pub use rollout::{MonteCarlo, QEvaluator, Rollout, RolloutConfig, Variant};
