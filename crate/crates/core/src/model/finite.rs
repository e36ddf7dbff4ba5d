use std::borrow::Cow;

use rand::Rng;

use super::{cartesian_product, joint_index, FactoredControl};
use crate::error::{Error, Result};

/// One point of the disturbance support at `(k, x, u)`, with the system
/// function and stage cost already applied: `next_state = f_k(x, u, w)` and
/// `cost = g_k(x, u, w)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub disturbance: usize,
    pub probability: f64,
    pub next_state: usize,
    pub cost: f64,
}

/// An N-stage stochastic control problem
/// `x_{k+1} = f_k(x_k, u_k, w_k)` with factored controls and finite
/// disturbance supports.
///
/// States of stage `k` are `0..state_count(k)`, for `k = 0..=N`.
/// Implementations must be cheap to query: solvers call [`outcomes`]
/// repeatedly instead of caching it.
///
/// [`outcomes`]: FiniteHorizonModel::outcomes
pub trait FiniteHorizonModel: Sync {
    fn horizon(&self) -> usize;

    fn agent_count(&self) -> usize;

    fn state_count(&self, stage: usize) -> usize;

    /// `U_k^agent(x)` in its stored order.
    fn control_set(&self, stage: usize, state: usize, agent: usize) -> Cow<'_, [usize]>;

    /// Disturbance support of `P_k(. | x, u)` in its stored order. `control`
    /// must be feasible.
    fn outcomes(&self, stage: usize, state: usize, control: &FactoredControl) -> Vec<Outcome>;

    /// `g_N(x)`.
    fn terminal_cost(&self, state: usize) -> f64;

    fn initial_state(&self) -> Option<usize> {
        None
    }

    fn state_label(&self, _stage: usize, state: usize) -> String {
        state.to_string()
    }
}

impl<M: FiniteHorizonModel + ?Sized> FiniteHorizonModel for &M {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn agent_count(&self) -> usize {
        (**self).agent_count()
    }
    fn state_count(&self, stage: usize) -> usize {
        (**self).state_count(stage)
    }
    fn control_set(&self, stage: usize, state: usize, agent: usize) -> Cow<'_, [usize]> {
        (**self).control_set(stage, state, agent)
    }
    fn outcomes(&self, stage: usize, state: usize, control: &FactoredControl) -> Vec<Outcome> {
        (**self).outcomes(stage, state, control)
    }
    fn terminal_cost(&self, state: usize) -> f64 {
        (**self).terminal_cost(state)
    }
    fn initial_state(&self) -> Option<usize> {
        (**self).initial_state()
    }
    fn state_label(&self, stage: usize, state: usize) -> String {
        (**self).state_label(stage, state)
    }
}

fn check_decision_point<M: FiniteHorizonModel + ?Sized>(
    model: &M,
    stage: usize,
    state: usize,
) -> Result<()> {
    if stage >= model.horizon() {
        return Err(Error::UnknownStage {
            stage,
            horizon: model.horizon(),
        });
    }
    if state >= model.state_count(stage) {
        return Err(Error::UnknownState { stage, state });
    }
    Ok(())
}

pub(crate) fn control_sets<M: FiniteHorizonModel + ?Sized>(
    model: &M,
    stage: usize,
    state: usize,
) -> Vec<Cow<'_, [usize]>> {
    (0..model.agent_count())
        .map(|a| model.control_set(stage, state, a))
        .collect()
}

/// `U_k(x) = U_k^1(x) x ... x U_k^m(x)`, lexicographic by agent.
pub fn enumerate_joint_controls<M: FiniteHorizonModel + ?Sized>(
    model: &M,
    stage: usize,
    state: usize,
) -> Result<Vec<FactoredControl>> {
    check_decision_point(model, stage, state)?;
    Ok(cartesian_product(&control_sets(model, stage, state)))
}

pub fn is_feasible<M: FiniteHorizonModel + ?Sized>(
    model: &M,
    stage: usize,
    state: usize,
    control: &FactoredControl,
) -> bool {
    stage < model.horizon()
        && state < model.state_count(stage)
        && joint_index(&control_sets(model, stage, state), control).is_some()
}

/// `E{ g_k(x,u,w) + J_{k+1}(f_k(x,u,w)) }` as an exact sum over the support.
pub fn expected_stage_value<M: FiniteHorizonModel + ?Sized>(
    model: &M,
    stage: usize,
    state: usize,
    control: &FactoredControl,
    next_values: &[f64],
) -> Result<f64> {
    check_decision_point(model, stage, state)?;
    let mut total = 0.0;
    for o in model.outcomes(stage, state, control) {
        let next = *next_values.get(o.next_state).ok_or(Error::MissingValue {
            stage: stage + 1,
            state: o.next_state,
        })?;
        total += o.probability * (o.cost + next);
    }
    Ok(total)
}

/// Inverse-CDF draw over the stored support order.
pub(crate) fn sample_outcome<R: Rng + ?Sized>(outcomes: &[Outcome], rng: &mut R) -> Outcome {
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    for o in outcomes {
        cumulative += o.probability;
        if draw < cumulative {
            return *o;
        }
    }
    // rounding slack: fall back to the last in-support point
    *outcomes
        .iter()
        .rev()
        .find(|o| o.probability > 0.0)
        .unwrap_or_else(|| outcomes.last().expect("empty disturbance support"))
}

/// Simulates one transition, returning `(f_k(x,u,w), g_k(x,u,w))`.
pub fn transition_sample<M, R>(
    model: &M,
    stage: usize,
    state: usize,
    control: &FactoredControl,
    rng: &mut R,
) -> Result<(usize, f64)>
where
    M: FiniteHorizonModel + ?Sized,
    R: Rng + ?Sized,
{
    check_decision_point(model, stage, state)?;
    if !is_feasible(model, stage, state, control) {
        return Err(Error::InfeasibleControl {
            stage,
            state,
            control: control.clone(),
        });
    }
    let o = sample_outcome(&model.outcomes(stage, state, control), rng);
    Ok((o.next_state, o.cost))
}

/// Transition data for one stage of a [`TabularFiniteModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct StageTable {
    /// `[state][agent]` -> control labels.
    pub control_sets: Vec<Vec<Vec<usize>>>,
    /// `[state][joint index]` -> disturbance support.
    pub outcomes: Vec<Vec<Vec<Outcome>>>,
}

/// A finite-horizon model stored as explicit tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularFiniteModel {
    agent_count: usize,
    state_counts: Vec<usize>,
    stages: Vec<StageTable>,
    terminal_costs: Vec<f64>,
    initial_state: Option<usize>,
    state_names: Option<Vec<String>>,
}

impl TabularFiniteModel {
    /// Builds a model from per-stage tables. `stages.len()` is the horizon;
    /// stage `k` has `stages[k].control_sets.len()` states and the terminal
    /// stage has `terminal_costs.len()` states.
    pub fn new(
        agent_count: usize,
        stages: Vec<StageTable>,
        terminal_costs: Vec<f64>,
    ) -> Result<Self> {
        if agent_count == 0 {
            return Err(Error::InvalidParams("agent count must be positive".into()));
        }
        let mut state_counts: Vec<usize> = stages.iter().map(|s| s.control_sets.len()).collect();
        state_counts.push(terminal_costs.len());
        for (k, stage) in stages.iter().enumerate() {
            if stage.outcomes.len() != stage.control_sets.len() {
                return Err(Error::InvalidParams(format!(
                    "stage {k}: {} outcome rows for {} states",
                    stage.outcomes.len(),
                    stage.control_sets.len()
                )));
            }
            for (x, sets) in stage.control_sets.iter().enumerate() {
                if sets.len() != agent_count {
                    return Err(Error::InvalidParams(format!(
                        "stage {k} state {x}: {} control sets for {agent_count} agents",
                        sets.len()
                    )));
                }
                let joint: usize = sets.iter().map(Vec::len).product();
                if stage.outcomes[x].len() != joint {
                    return Err(Error::InvalidParams(format!(
                        "stage {k} state {x}: {} outcome lists for {joint} joint controls",
                        stage.outcomes[x].len()
                    )));
                }
            }
        }
        Ok(Self {
            agent_count,
            state_counts,
            stages,
            terminal_costs,
            initial_state: None,
            state_names: None,
        })
    }

    /// Same state set and dynamics at every one of `horizon` stages.
    pub fn stationary(
        agent_count: usize,
        horizon: usize,
        table: StageTable,
        terminal_costs: Vec<f64>,
    ) -> Result<Self> {
        if table.control_sets.len() != terminal_costs.len() {
            return Err(Error::InvalidParams(format!(
                "{} terminal costs for {} states",
                terminal_costs.len(),
                table.control_sets.len()
            )));
        }
        Self::new(agent_count, vec![table; horizon], terminal_costs)
    }

    pub fn with_initial_state(mut self, state: usize) -> Result<Self> {
        if state >= self.state_counts[0] {
            return Err(Error::UnknownState { stage: 0, state });
        }
        self.initial_state = Some(state);
        Ok(self)
    }

    /// Names shared by every stage; only meaningful when all stages have the
    /// same state count.
    pub fn with_state_names(mut self, names: Vec<String>) -> Result<Self> {
        if self.state_counts.iter().any(|&c| c != names.len()) {
            return Err(Error::InvalidParams(
                "state names require the same state count at every stage".into(),
            ));
        }
        self.state_names = Some(names);
        Ok(self)
    }

    pub fn stage_table(&self, stage: usize) -> &StageTable {
        &self.stages[stage]
    }

    pub fn terminal_costs(&self) -> &[f64] {
        &self.terminal_costs
    }

    pub fn state_names(&self) -> Option<&[String]> {
        self.state_names.as_deref()
    }

    /// True when every stage shares one table.
    pub fn is_stationary(&self) -> bool {
        self.stages.windows(2).all(|w| w[0] == w[1])
            && self.state_counts.windows(2).all(|w| w[0] == w[1])
    }
}

impl FiniteHorizonModel for TabularFiniteModel {
    fn horizon(&self) -> usize {
        self.stages.len()
    }

    fn agent_count(&self) -> usize {
        self.agent_count
    }

    fn state_count(&self, stage: usize) -> usize {
        self.state_counts[stage]
    }

    fn control_set(&self, stage: usize, state: usize, agent: usize) -> Cow<'_, [usize]> {
        Cow::Borrowed(&self.stages[stage].control_sets[state][agent])
    }

    fn outcomes(&self, stage: usize, state: usize, control: &FactoredControl) -> Vec<Outcome> {
        let table = &self.stages[stage];
        let index = joint_index(&table.control_sets[state], control).unwrap_or_else(|| {
            panic!("control {control} infeasible at stage {stage} state {state}")
        });
        table.outcomes[state][index].clone()
    }

    fn terminal_cost(&self, state: usize) -> f64 {
        self.terminal_costs[state]
    }

    fn initial_state(&self) -> Option<usize> {
        self.initial_state
    }

    fn state_label(&self, _stage: usize, state: usize) -> String {
        match &self.state_names {
            Some(names) => names[state].clone(),
            None => state.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn two_point(cost_a: f64, cost_b: f64) -> TabularFiniteModel {
        let table = StageTable {
            control_sets: vec![vec![vec![0]], vec![vec![0]]],
            outcomes: vec![
                vec![vec![
                    Outcome {
                        disturbance: 0,
                        probability: 0.5,
                        next_state: 0,
                        cost: cost_a,
                    },
                    Outcome {
                        disturbance: 1,
                        probability: 0.5,
                        next_state: 1,
                        cost: cost_b,
                    },
                ]],
                vec![vec![Outcome {
                    disturbance: 0,
                    probability: 1.0,
                    next_state: 1,
                    cost: 0.0,
                }]],
            ],
        };
        TabularFiniteModel::stationary(1, 1, table, vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn two_point_mean() {
        let model = two_point(1.0, 3.0);
        let u = FactoredControl::new(vec![0]);
        let v = expected_stage_value(&model, 0, 0, &u, &[0.0, 0.0]).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn missing_successor_value() {
        let model = two_point(1.0, 3.0);
        let u = FactoredControl::new(vec![0]);
        let err = expected_stage_value(&model, 0, 0, &u, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::MissingValue { state: 1, .. }));
    }

    #[test]
    fn unknown_state_is_rejected() {
        let model = two_point(1.0, 3.0);
        assert!(matches!(
            enumerate_joint_controls(&model, 0, 5),
            Err(Error::UnknownState { state: 5, .. })
        ));
        assert!(matches!(
            enumerate_joint_controls(&model, 1, 0),
            Err(Error::UnknownStage { .. })
        ));
    }

    #[test]
    fn deterministic_sample_ignores_seed() {
        let model = two_point(1.0, 3.0);
        let u = FactoredControl::new(vec![0]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(
                transition_sample(&model, 0, 1, &u, &mut rng).unwrap(),
                (1, 0.0)
            );
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let model = two_point(1.0, 3.0);
        let u = FactoredControl::new(vec![0]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| transition_sample(&model, 0, 0, &u, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn equiprobable_branch_frequency() {
        let model = two_point(1.0, 3.0);
        let u = FactoredControl::new(vec![0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| transition_sample(&model, 0, 0, &u, &mut rng).unwrap().0 == 1)
            .count();
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.01, "frequency {freq}");
    }

    #[test]
    fn infeasible_sample_is_an_error() {
        let model = two_point(1.0, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = FactoredControl::new(vec![4]);
        assert!(matches!(
            transition_sample(&model, 0, 0, &u, &mut rng),
            Err(Error::InfeasibleControl { .. })
        ));
    }
}
