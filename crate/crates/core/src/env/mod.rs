//! Concrete problem instances: pursuit environments, the two static
//! counterexamples, and seeded random generators.

mod counterexample;
pub mod grid;
pub mod line;
mod random;

pub use counterexample::{
    static_counterexample_finite, static_counterexample_mdp, CounterexampleKind,
};
pub use grid::{FlyMotion, GridPursuit, GridPursuitParams, GridState};
pub use line::{LinePursuit, LinePursuitParams, LineState};
pub use random::{
    random_finite_model, random_finite_policy, random_mdp, random_stationary_policy,
    RandomFiniteParams, RandomMdpParams,
};

use crate::model::{FactoredControl, FactoredPolicy, FiniteHorizonModel};

/// A pursuit model with a go-towards-the-nearest-fly heuristic.
pub trait PursuitModel: FiniteHorizonModel {
    fn greedy_control(&self, stage: usize, state: usize) -> FactoredControl;
}

/// Tabulates the greedy heuristic over every stage and state.
pub fn greedy_base_policy<M: PursuitModel + ?Sized>(model: &M) -> FactoredPolicy {
    FactoredPolicy::from_fn(model, |k, x| model.greedy_control(k, x))
}
