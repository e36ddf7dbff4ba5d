//! Problem models and the factored-control vocabulary shared by every solver.
//!
//! Two model families are supported: an N-stage stochastic control problem
//! ([`FiniteHorizonModel`]) and a tabular discounted MDP ([`DiscountedMdp`]).
//! In both, the control at a state is a tuple with one component per agent,
//! drawn from the Cartesian product of per-agent control sets.
//!
//! States are dense `usize` indices (per stage for the finite-horizon model),
//! agents are numbered `0..m`, and control components are opaque `usize`
//! labels. Tie-breaking everywhere refers to the *position* of a label in
//! the stored control-set order, never to the label value.

mod discounted;
mod finite;
mod validate;

use std::fmt;

use crate::error::{Error, Result};

pub use discounted::{DiscountedMdp, Transition};
pub(crate) use finite::sample_outcome;
pub use finite::{
    enumerate_joint_controls, expected_stage_value, is_feasible, transition_sample,
    FiniteHorizonModel, Outcome, StageTable, TabularFiniteModel,
};
pub use validate::{validate_discounted, validate_finite, ValidationReport, Violation};

/// Tolerance on probability row sums.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Absolute tolerance for comparing costs and values.
pub const VALUE_TOLERANCE: f64 = 1e-9;

/// A joint control `(u_1, ..., u_m)`, one label per agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactoredControl(Vec<usize>);

impl FactoredControl {
    pub fn new(components: Vec<usize>) -> Self {
        Self(components)
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn agent_count(&self) -> usize {
        self.0.len()
    }

    pub fn component(&self, agent: usize) -> usize {
        self.0[agent]
    }

    /// Copy of `self` with the component of `agent` replaced.
    pub fn with_component(&self, agent: usize, label: usize) -> Self {
        let mut out = self.clone();
        out.0[agent] = label;
        out
    }

    pub fn set_component(&mut self, agent: usize, label: usize) {
        self.0[agent] = label;
    }
}

impl From<Vec<usize>> for FactoredControl {
    fn from(components: Vec<usize>) -> Self {
        Self(components)
    }
}

impl fmt::Display for FactoredControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// Cartesian product of per-agent control sets, lexicographic with agent 0
/// as the most significant position.
pub fn cartesian_product<S: AsRef<[usize]>>(sets: &[S]) -> Vec<FactoredControl> {
    let count: usize = sets.iter().map(|s| s.as_ref().len()).product();
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let mut cursor = vec![0usize; sets.len()];
    loop {
        out.push(FactoredControl(
            cursor
                .iter()
                .zip(sets)
                .map(|(&i, s)| s.as_ref()[i])
                .collect(),
        ));
        // odometer increment, last agent fastest
        let mut agent = sets.len();
        loop {
            if agent == 0 {
                return out;
            }
            agent -= 1;
            cursor[agent] += 1;
            if cursor[agent] < sets[agent].as_ref().len() {
                break;
            }
            cursor[agent] = 0;
        }
    }
}

/// Position of `control` in [`cartesian_product`]`(sets)`, if feasible.
pub fn joint_index<S: AsRef<[usize]>>(sets: &[S], control: &FactoredControl) -> Option<usize> {
    if sets.len() != control.agent_count() {
        return None;
    }
    let mut index = 0;
    for (set, &label) in sets.iter().zip(control.components()) {
        let set = set.as_ref();
        let pos = set.iter().position(|&l| l == label)?;
        index = index * set.len() + pos;
    }
    Some(index)
}

/// First index whose value is within `tol` of the minimum.
pub(crate) fn argmin_lowest(values: &[f64], tol: f64) -> usize {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .position(|&v| v <= min + tol)
        .expect("argmin over an empty set")
}

/// Like [`argmin_lowest`], but keeps `current` whenever it attains the minimum.
pub(crate) fn argmin_prefer(values: &[f64], current: usize, tol: f64) -> usize {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values[current] <= min + tol {
        current
    } else {
        argmin_lowest(values, tol)
    }
}

/// The order in which agents select their control components: a
/// permutation of `0..m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AgentOrder(Vec<usize>);

impl AgentOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let m = order.len();
        let mut seen = vec![false; m];
        for &a in &order {
            if a >= m || seen[a] {
                return Err(Error::InvalidOrder { order, agents: m });
            }
            seen[a] = true;
        }
        if m == 0 {
            return Err(Error::InvalidOrder { order, agents: 0 });
        }
        Ok(Self(order))
    }

    pub fn identity(agents: usize) -> Self {
        Self((0..agents).collect())
    }

    pub fn agents(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for AgentOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based for humans
        let parts: Vec<String> = self.0.iter().map(|a| (a + 1).to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Agent order for a finite-horizon run: either fixed, or one per stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderSchedule {
    Fixed(AgentOrder),
    PerStage(Vec<AgentOrder>),
}

impl OrderSchedule {
    pub fn at(&self, stage: usize) -> &AgentOrder {
        match self {
            OrderSchedule::Fixed(order) => order,
            OrderSchedule::PerStage(orders) => &orders[stage],
        }
    }

    /// Checks every order has `agents` entries and that per-stage schedules
    /// cover `horizon` stages.
    pub fn check(&self, agents: usize, horizon: usize) -> Result<()> {
        let orders: &[AgentOrder] = match self {
            OrderSchedule::Fixed(order) => std::slice::from_ref(order),
            OrderSchedule::PerStage(orders) => {
                if orders.len() < horizon {
                    return Err(Error::InvalidParams(format!(
                        "per-stage order schedule covers {} of {horizon} stages",
                        orders.len()
                    )));
                }
                orders
            }
        };
        for order in orders {
            if order.len() != agents {
                return Err(Error::InvalidOrder {
                    order: order.0.clone(),
                    agents,
                });
            }
        }
        Ok(())
    }
}

impl From<AgentOrder> for OrderSchedule {
    fn from(order: AgentOrder) -> Self {
        OrderSchedule::Fixed(order)
    }
}

/// A policy `pi = {mu_0, ..., mu_{N-1}}` of a finite-horizon model, tabulated
/// per stage and state.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredPolicy {
    stages: Vec<Vec<FactoredControl>>,
}

impl FactoredPolicy {
    pub fn new(stages: Vec<Vec<FactoredControl>>) -> Self {
        Self { stages }
    }

    /// Tabulates `f(stage, state)` over every stage `0..N` and state of `model`.
    pub fn from_fn<M, F>(model: &M, mut f: F) -> Self
    where
        M: FiniteHorizonModel + ?Sized,
        F: FnMut(usize, usize) -> FactoredControl,
    {
        let stages = (0..model.horizon())
            .map(|k| (0..model.state_count(k)).map(|x| f(k, x)).collect())
            .collect();
        Self { stages }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn control(&self, stage: usize, state: usize) -> &FactoredControl {
        &self.stages[stage][state]
    }

    pub fn stage(&self, stage: usize) -> &[FactoredControl] {
        &self.stages[stage]
    }

    /// Verifies the policy covers `model` and is feasible everywhere.
    pub fn check_feasible<M: FiniteHorizonModel + ?Sized>(&self, model: &M) -> Result<()> {
        if self.stages.len() != model.horizon() {
            return Err(Error::PolicyShape {
                expected: model.horizon(),
                actual: self.stages.len(),
            });
        }
        for (k, stage) in self.stages.iter().enumerate() {
            if stage.len() != model.state_count(k) {
                return Err(Error::PolicyShape {
                    expected: model.state_count(k),
                    actual: stage.len(),
                });
            }
            for (x, u) in stage.iter().enumerate() {
                if !is_feasible(model, k, x, u) {
                    return Err(Error::InfeasibleControl {
                        stage: k,
                        state: x,
                        control: u.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A stationary policy `mu(x) = (mu_1(x), ..., mu_m(x))` of a discounted MDP.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StationaryPolicy(Vec<FactoredControl>);

impl StationaryPolicy {
    pub fn new(controls: Vec<FactoredControl>) -> Self {
        Self(controls)
    }

    /// The same joint control at every one of `states` states.
    pub fn uniform(states: usize, control: FactoredControl) -> Self {
        Self(vec![control; states])
    }

    pub fn from_fn(states: usize, f: impl FnMut(usize) -> FactoredControl) -> Self {
        Self((0..states).map(f).collect())
    }

    pub fn control(&self, state: usize) -> &FactoredControl {
        &self.0[state]
    }

    pub fn controls(&self) -> &[FactoredControl] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_feasible(&self, mdp: &DiscountedMdp) -> Result<()> {
        if self.0.len() != mdp.state_count() {
            return Err(Error::PolicyShape {
                expected: mdp.state_count(),
                actual: self.0.len(),
            });
        }
        for (x, u) in self.0.iter().enumerate() {
            mdp.joint_index(x, u)?;
        }
        Ok(())
    }
}

impl fmt::Display for StationaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, u) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{u}")?;
        }
        Ok(())
    }
}
