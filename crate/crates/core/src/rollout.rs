//! Rollout for finite-horizon models.
//!
//! Three variants are provided, all using the base policy's Q-factors
//! `Q_{k,pi}(x, u) = E{ g_k(x,u,w) + J_{k+1,pi}(f_k(x,u,w)) }`:
//!
//! * standard: minimize over the full joint control set (`prod_l |U_l|`
//!   Q-factors per state);
//! * multiagent: minimize one agent at a time, earlier agents at their
//!   rollout values and later agents at the base policy's values
//!   (`sum_l |U_l|` Q-factors per state);
//! * uncoordinated: every agent minimizes with all others at base values.
//!
//! Q-factors come from either exact expectation over the base policy's
//! cost-to-go (memoized) or Monte Carlo simulation.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dp::{evaluate_policy_finite, StageValues};
use crate::error::{Error, Result};

use crate::model::{
    argmin_lowest, enumerate_joint_controls, sample_outcome, AgentOrder, FactoredControl,
    FactoredPolicy, FiniteHorizonModel, OrderSchedule, VALUE_TOLERANCE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Standard,
    Multiagent,
    Uncoordinated,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Standard => "standard",
            Variant::Multiagent => "multiagent",
            Variant::Uncoordinated => "uncoordinated",
        })
    }
}

/// Cost-to-go estimate `(stage, state) -> real` added where a truncated
/// simulation stops.
pub type TerminalApproximation = Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct MonteCarlo {
    pub trajectories: usize,
    /// Number of simulated stages, counting the first one; `None` runs to
    /// the horizon.
    pub truncation: Option<usize>,
    /// Defaults to zero.
    pub terminal_approximation: Option<TerminalApproximation>,
    pub seed: u64,
}

impl MonteCarlo {
    pub fn new(trajectories: usize, seed: u64) -> Self {
        Self {
            trajectories,
            truncation: None,
            terminal_approximation: None,
            seed,
        }
    }
}

impl fmt::Debug for MonteCarlo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonteCarlo")
            .field("trajectories", &self.trajectories)
            .field("truncation", &self.truncation)
            .field(
                "terminal_approximation",
                &self.terminal_approximation.as_ref().map(|_| ".."),
            )
            .field("seed", &self.seed)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum QEvaluator {
    Exact,
    MonteCarlo(MonteCarlo),
}

#[derive(Clone, Debug)]
pub struct RolloutConfig {
    pub variant: Variant,
    /// `None` means agents decide in index order.
    pub order: Option<OrderSchedule>,
    pub evaluator: QEvaluator,
    pub tie_tolerance: f64,
}

impl RolloutConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            order: None,
            evaluator: QEvaluator::Exact,
            tie_tolerance: VALUE_TOLERANCE,
        }
    }

    pub fn with_order(mut self, order: impl Into<OrderSchedule>) -> Self {
        self.order = Some(order.into());
        self
    }

    pub fn with_evaluator(mut self, evaluator: QEvaluator) -> Self {
        self.evaluator = evaluator;
        self
    }
}

/// Sample mean of simulated Q-factor costs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QEstimate {
    pub mean: f64,
    /// Sample standard deviation of the per-trajectory costs.
    pub std_dev: f64,
    pub trajectories: usize,
}

impl QEstimate {
    pub fn std_error(&self) -> f64 {
        self.std_dev / (self.trajectories as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub stage: usize,
    pub state: usize,
    pub control: FactoredControl,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: usize,
    pub terminal_cost: f64,
    pub total_cost: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one simulated trajectory. The control is deliberately left out
/// so every control compared at `(stage, state)` sees the same random
/// numbers.
fn trajectory_seed(base: u64, stage: usize, state: usize, index: usize) -> u64 {
    [stage as u64, state as u64, index as u64]
        .into_iter()
        .fold(splitmix(base), |acc, v| splitmix(acc ^ v))
}

/// A rollout policy bound to a model, a base policy and a configuration.
///
/// The evaluation counter tracks every Q-factor requested through this
/// value; exact base-policy values are cached across calls.
pub struct Rollout<'a, M: ?Sized> {
    model: &'a M,
    base: &'a FactoredPolicy,
    config: RolloutConfig,
    order: OrderSchedule,
    base_values: Mutex<HashMap<(usize, usize), f64>>,
    evaluations: AtomicU64,
}

impl<'a, M: FiniteHorizonModel + ?Sized> Rollout<'a, M> {
    pub fn new(model: &'a M, base: &'a FactoredPolicy, config: RolloutConfig) -> Result<Self> {
        base.check_feasible(model)?;
        if config.tie_tolerance.is_nan() || config.tie_tolerance < 0.0 {
            return Err(Error::InvalidParams(format!(
                "tie tolerance must be nonnegative, got {}",
                config.tie_tolerance
            )));
        }
        if let QEvaluator::MonteCarlo(mc) = &config.evaluator {
            if mc.trajectories == 0 {
                return Err(Error::InvalidParams(
                    "trajectory count must be positive".into(),
                ));
            }
            if mc.truncation == Some(0) {
                return Err(Error::InvalidParams(
                    "truncation length must be positive".into(),
                ));
            }
        }
        let order = config
            .order
            .clone()
            .unwrap_or_else(|| AgentOrder::identity(model.agent_count()).into());
        order.check(model.agent_count(), model.horizon())?;
        Ok(Self {
            model,
            base,
            config,
            order,
            base_values: Mutex::new(HashMap::new()),
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &RolloutConfig {
        &self.config
    }

    /// Q-factors requested so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn check_point(&self, stage: usize, state: usize) -> Result<()> {
        if stage >= self.model.horizon() {
            return Err(Error::UnknownStage {
                stage,
                horizon: self.model.horizon(),
            });
        }
        if state >= self.model.state_count(stage) {
            return Err(Error::UnknownState { stage, state });
        }
        Ok(())
    }

    /// Exact `J_{k,pi}(x)` of the base policy.
    pub fn base_value(&self, stage: usize, state: usize) -> f64 {
        let mut cache = self.base_values.lock();
        self.base_value_cached(&mut cache, stage, state)
    }

    fn base_value_cached(
        &self,
        cache: &mut HashMap<(usize, usize), f64>,
        stage: usize,
        state: usize,
    ) -> f64 {
        if stage == self.model.horizon() {
            return self.model.terminal_cost(state);
        }
        if let Some(&v) = cache.get(&(stage, state)) {
            return v;
        }
        let u = self.base.control(stage, state);
        let mut total = 0.0;
        for o in self.model.outcomes(stage, state, u) {
            total +=
                o.probability * (o.cost + self.base_value_cached(cache, stage + 1, o.next_state));
        }
        cache.insert((stage, state), total);
        total
    }

    fn exact_q(&self, stage: usize, state: usize, control: &FactoredControl) -> f64 {
        let mut cache = self.base_values.lock();
        let mut total = 0.0;
        for o in self.model.outcomes(stage, state, control) {
            total += o.probability
                * (o.cost + self.base_value_cached(&mut cache, stage + 1, o.next_state));
        }
        total
    }

    fn simulate(
        &self,
        mc: &MonteCarlo,
        stage: usize,
        state: usize,
        control: &FactoredControl,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let horizon = self.model.horizon();
        let stop = match mc.truncation {
            Some(len) => horizon.min(stage + len),
            None => horizon,
        };
        let first = sample_outcome(&self.model.outcomes(stage, state, control), rng);
        let mut total = first.cost;
        let mut x = first.next_state;
        for k in stage + 1..stop {
            let o = sample_outcome(&self.model.outcomes(k, x, self.base.control(k, x)), rng);
            total += o.cost;
            x = o.next_state;
        }
        total
            + if stop == horizon {
                self.model.terminal_cost(x)
            } else {
                mc.terminal_approximation
                    .as_ref()
                    .map_or(0.0, |f| f(stop, x))
            }
    }

    fn mc_q(
        &self,
        mc: &MonteCarlo,
        stage: usize,
        state: usize,
        control: &FactoredControl,
    ) -> QEstimate {
        let costs: Vec<f64> = (0..mc.trajectories)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(mc.seed, stage, state, i));
                self.simulate(mc, stage, state, control, &mut rng)
            })
            .collect();
        let n = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let var = if costs.len() > 1 {
            costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        QEstimate {
            mean,
            std_dev: var.sqrt(),
            trajectories: costs.len(),
        }
    }

    fn q_unchecked(&self, stage: usize, state: usize, control: &FactoredControl) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        match &self.config.evaluator {
            QEvaluator::Exact => self.exact_q(stage, state, control),
            QEvaluator::MonteCarlo(mc) => self.mc_q(mc, stage, state, control).mean,
        }
    }

    /// `Q_{k,pi}(x, u)` under the configured evaluator; counts one evaluation.
    pub fn q_factor(&self, stage: usize, state: usize, control: &FactoredControl) -> Result<f64> {
        self.check_point(stage, state)?;
        if !crate::model::is_feasible(self.model, stage, state, control) {
            return Err(Error::InfeasibleControl {
                stage,
                state,
                control: control.clone(),
            });
        }
        Ok(self.q_unchecked(stage, state, control))
    }

    /// Monte Carlo Q-factor estimate with its sample statistics; counts one
    /// evaluation. Uses the configured Monte Carlo settings, or
    /// `fallback` when the configuration is exact.
    pub fn mc_q_estimate(
        &self,
        stage: usize,
        state: usize,
        control: &FactoredControl,
        fallback: Option<&MonteCarlo>,
    ) -> Result<QEstimate> {
        self.check_point(stage, state)?;
        let mc = match (&self.config.evaluator, fallback) {
            (QEvaluator::MonteCarlo(mc), _) => mc,
            (QEvaluator::Exact, Some(mc)) => mc,
            (QEvaluator::Exact, None) => {
                return Err(Error::InvalidParams(
                    "Monte Carlo estimate requested without Monte Carlo settings".into(),
                ))
            }
        };
        if mc.trajectories == 0 {
            return Err(Error::InvalidParams(
                "trajectory count must be positive".into(),
            ));
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        Ok(self.mc_q(mc, stage, state, control))
    }

    fn pick(&self, values: &[f64]) -> usize {
        argmin_lowest(values, self.config.tie_tolerance)
    }

    /// All-agents-at-once minimization over `U_k(x)`.
    pub fn standard_control(&self, stage: usize, state: usize) -> Result<FactoredControl> {
        let mut joint = enumerate_joint_controls(self.model, stage, state)?;
        let q: Vec<f64> = joint
            .iter()
            .map(|u| self.q_unchecked(stage, state, u))
            .collect();
        Ok(joint.swap_remove(self.pick(&q)))
    }

    /// One-agent-at-a-time minimization in the configured order.
    pub fn multiagent_control(&self, stage: usize, state: usize) -> Result<FactoredControl> {
        self.check_point(stage, state)?;
        let mut u = self.base.control(stage, state).clone();
        for &agent in self.order.at(stage).agents() {
            let set = self.model.control_set(stage, state, agent);
            let q: Vec<f64> = set
                .iter()
                .map(|&l| self.q_unchecked(stage, state, &u.with_component(agent, l)))
                .collect();
            u.set_component(agent, set[self.pick(&q)]);
        }
        Ok(u)
    }

    /// Each agent minimizes assuming all others follow the base policy.
    pub fn uncoordinated_control(&self, stage: usize, state: usize) -> Result<FactoredControl> {
        self.check_point(stage, state)?;
        let base = self.base.control(stage, state);
        let mut u = base.clone();
        for &agent in self.order.at(stage).agents() {
            let set = self.model.control_set(stage, state, agent);
            let q: Vec<f64> = set
                .iter()
                .map(|&l| self.q_unchecked(stage, state, &base.with_component(agent, l)))
                .collect();
            u.set_component(agent, set[self.pick(&q)]);
        }
        Ok(u)
    }

    /// Control of the configured variant at `(stage, state)`.
    pub fn control(&self, stage: usize, state: usize) -> Result<FactoredControl> {
        match self.config.variant {
            Variant::Standard => self.standard_control(stage, state),
            Variant::Multiagent => self.multiagent_control(stage, state),
            Variant::Uncoordinated => self.uncoordinated_control(stage, state),
        }
    }

    /// Simulates the rollout policy forward from `initial` at stage 0.
    pub fn run_episode<R: Rng + ?Sized>(&self, initial: usize, rng: &mut R) -> Result<Trajectory> {
        if initial >= self.model.state_count(0) {
            return Err(Error::UnknownState {
                stage: 0,
                state: initial,
            });
        }
        let mut steps = Vec::with_capacity(self.model.horizon());
        let mut x = initial;
        let mut total = 0.0;
        for k in 0..self.model.horizon() {
            let u = self.control(k, x)?;
            let o = sample_outcome(&self.model.outcomes(k, x, &u), rng);
            total += o.cost;
            steps.push(Step {
                stage: k,
                state: x,
                control: u,
                cost: o.cost,
            });
            x = o.next_state;
        }
        let terminal_cost = self.model.terminal_cost(x);
        Ok(Trajectory {
            steps,
            final_state: x,
            terminal_cost,
            total_cost: total + terminal_cost,
        })
    }

    /// The full rollout policy, tabulated at every stage and state. Exact
    /// evaluator only.
    pub fn policy_table(&self) -> Result<FactoredPolicy> {
        if !matches!(self.config.evaluator, QEvaluator::Exact) {
            return Err(Error::ExactEvaluatorRequired);
        }
        let stages = (0..self.model.horizon())
            .map(|k| {
                (0..self.model.state_count(k))
                    .map(|x| self.control(k, x))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FactoredPolicy::new(stages))
    }
}

/// Exact cost of the rollout policy obtained with each candidate order.
pub fn compare_orders<M: FiniteHorizonModel + ?Sized>(
    model: &M,
    base: &FactoredPolicy,
    variant: Variant,
    orders: &[OrderSchedule],
) -> Result<Vec<StageValues>> {
    orders
        .iter()
        .map(|order| {
            let rollout = Rollout::new(
                model,
                base,
                RolloutConfig::new(variant).with_order(order.clone()),
            )?;
            evaluate_policy_finite(model, &rollout.policy_table()?)
        })
        .collect()
}
