//! Policy iteration for discounted MDPs: the standard all-agents-at-once
//! improvement and the agent-by-agent improvement, plus a checker for
//! agent-by-agent optimality.
//!
//! Both improvements keep the current component whenever it attains the
//! minimum within [`VALUE_TOLERANCE`], so iteration stops exactly when the
//! policy reproduces itself.

use std::fmt;

use rayon::prelude::*;

use crate::dp::{evaluate_policy_discounted, row_value};
use crate::error::{Error, Result};
use crate::model::{argmin_prefer, AgentOrder, DiscountedMdp, StationaryPolicy, VALUE_TOLERANCE};

pub const DEFAULT_ITERATION_CAP: usize = 100_000;

/// An improved policy and the number of Q-factors computed to obtain it.
#[derive(Clone, Debug, PartialEq)]
pub struct Improvement {
    pub policy: StationaryPolicy,
    pub q_evaluations: u64,
}

fn check_values(mdp: &DiscountedMdp, j: &[f64]) -> Result<()> {
    if j.len() != mdp.state_count() {
        return Err(Error::ValueLength {
            expected: mdp.state_count(),
            actual: j.len(),
        });
    }
    Ok(())
}

/// `mu~(x) in argmin_u Q(x, u)` against `j`, over the full joint set.
pub fn improve_standard_against(
    mdp: &DiscountedMdp,
    mu: &StationaryPolicy,
    j: &[f64],
) -> Result<Improvement> {
    mu.check_feasible(mdp)?;
    check_values(mdp, j)?;
    let controls = (0..mdp.state_count())
        .into_par_iter()
        .map(|x| {
            let current = mdp.joint_index(x, mu.control(x))?;
            let q: Vec<f64> = (0..mdp.joint_count(x))
                .map(|u| row_value(mdp, x, u, j))
                .collect();
            let best = argmin_prefer(&q, current, VALUE_TOLERANCE);
            Ok(mdp.joint_controls(x)?.swap_remove(best))
        })
        .collect::<Result<Vec<_>>>()?;
    let q_evaluations = (0..mdp.state_count())
        .map(|x| mdp.joint_count(x) as u64)
        .sum();
    Ok(Improvement {
        policy: StationaryPolicy::new(controls),
        q_evaluations,
    })
}

/// One component at a time in `order`: agent `l` minimizes with earlier
/// agents at their new values and later agents at `mu`'s values.
pub fn improve_agentwise_against(
    mdp: &DiscountedMdp,
    mu: &StationaryPolicy,
    j: &[f64],
    order: &AgentOrder,
) -> Result<Improvement> {
    mu.check_feasible(mdp)?;
    check_values(mdp, j)?;
    if order.len() != mdp.agent_count() {
        return Err(Error::InvalidOrder {
            order: order.agents().to_vec(),
            agents: mdp.agent_count(),
        });
    }
    let controls = (0..mdp.state_count())
        .into_par_iter()
        .map(|x| {
            let mut u = mu.control(x).clone();
            for &agent in order.agents() {
                let set = mdp.control_set(x, agent);
                let current = set
                    .iter()
                    .position(|&l| l == u.component(agent))
                    .expect("feasibility checked");
                let q = set
                    .iter()
                    .map(|&l| {
                        let joint = mdp.joint_index(x, &u.with_component(agent, l))?;
                        Ok(row_value(mdp, x, joint, j))
                    })
                    .collect::<Result<Vec<_>>>()?;
                u.set_component(agent, set[argmin_prefer(&q, current, VALUE_TOLERANCE)]);
            }
            Ok(u)
        })
        .collect::<Result<Vec<_>>>()?;
    let q_evaluations = (0..mdp.state_count())
        .map(|x| {
            mdp.control_sets(x)
                .iter()
                .map(|s| s.len() as u64)
                .sum::<u64>()
        })
        .sum();
    Ok(Improvement {
        policy: StationaryPolicy::new(controls),
        q_evaluations,
    })
}

/// Evaluates `mu` and improves it with the standard rule.
pub fn improvement_step_standard(
    mdp: &DiscountedMdp,
    mu: &StationaryPolicy,
) -> Result<Improvement> {
    let j = evaluate_policy_discounted(mdp, mu)?;
    improve_standard_against(mdp, mu, &j)
}

/// Evaluates `mu` and improves it agent by agent.
pub fn improvement_step_agentwise(
    mdp: &DiscountedMdp,
    mu: &StationaryPolicy,
    order: &AgentOrder,
) -> Result<Improvement> {
    let j = evaluate_policy_discounted(mdp, mu)?;
    improve_agentwise_against(mdp, mu, &j, order)
}

/// One evaluated policy of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct PiIterate {
    pub iteration: usize,
    pub policy: StationaryPolicy,
    pub value: Vec<f64>,
    /// Q-factors spent improving this policy; zero if it was not improved.
    pub q_evaluations: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// The improvement step returned the policy unchanged.
    Converged,
    IterationCap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiTrace {
    pub iterates: Vec<PiIterate>,
    pub improvement_steps: usize,
    pub termination: Termination,
}

impl PiTrace {
    /// Improvement steps performed, including the final one that confirmed
    /// convergence.
    pub fn iterations(&self) -> usize {
        self.improvement_steps
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn final_iterate(&self) -> &PiIterate {
        self.iterates
            .last()
            .expect("trace has at least one iterate")
    }

    pub fn final_policy(&self) -> &StationaryPolicy {
        &self.final_iterate().policy
    }

    pub fn final_value(&self) -> &[f64] {
        &self.final_iterate().value
    }

    pub fn total_q_evaluations(&self) -> u64 {
        self.iterates.iter().map(|it| it.q_evaluations).sum()
    }
}

fn run<F>(
    mdp: &DiscountedMdp,
    mu0: &StationaryPolicy,
    cap: usize,
    mut improve: F,
) -> Result<PiTrace>
where
    F: FnMut(usize, &StationaryPolicy, &[f64]) -> Result<Improvement>,
{
    let mut mu = mu0.clone();
    let mut iterates = Vec::new();
    let mut steps = 0;
    loop {
        let value = evaluate_policy_discounted(mdp, &mu)?;
        if steps == cap {
            iterates.push(PiIterate {
                iteration: steps,
                policy: mu,
                value,
                q_evaluations: 0,
            });
            return Ok(PiTrace {
                iterates,
                improvement_steps: steps,
                termination: Termination::IterationCap,
            });
        }
        let next = improve(steps, &mu, &value)?;
        let unchanged = next.policy == mu;
        iterates.push(PiIterate {
            iteration: steps,
            policy: mu,
            value,
            q_evaluations: next.q_evaluations,
        });
        steps += 1;
        if unchanged {
            return Ok(PiTrace {
                iterates,
                improvement_steps: steps,
                termination: Termination::Converged,
            });
        }
        mu = next.policy;
    }
}

/// Standard policy iteration from `mu0`.
pub fn standard_pi(mdp: &DiscountedMdp, mu0: &StationaryPolicy, cap: usize) -> Result<PiTrace> {
    run(mdp, mu0, cap, |_, mu, j| {
        improve_standard_against(mdp, mu, j)
    })
}

/// Agent-by-agent policy iteration with a fixed order.
pub fn agent_by_agent_pi(
    mdp: &DiscountedMdp,
    mu0: &StationaryPolicy,
    order: &AgentOrder,
    cap: usize,
) -> Result<PiTrace> {
    run(mdp, mu0, cap, |_, mu, j| {
        improve_agentwise_against(mdp, mu, j, order)
    })
}

/// Agent-by-agent policy iteration with the order chosen per iteration.
pub fn agent_by_agent_pi_with<F>(
    mdp: &DiscountedMdp,
    mu0: &StationaryPolicy,
    cap: usize,
    mut order: F,
) -> Result<PiTrace>
where
    F: FnMut(usize) -> AgentOrder,
{
    run(mdp, mu0, cap, |k, mu, j| {
        improve_agentwise_against(mdp, mu, j, &order(k))
    })
}

/// A single-agent deviation that strictly lowers the Q-factor.
#[derive(Clone, Debug, PartialEq)]
pub struct AbaoViolation {
    pub state: usize,
    pub agent: usize,
    pub current_q: f64,
    pub better_label: usize,
    pub better_q: f64,
}

impl fmt::Display for AbaoViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "state {} agent {}: control {} gives {} < {}",
            self.state,
            self.agent + 1,
            self.better_label,
            self.better_q,
            self.current_q
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbaoReport {
    pub value: Vec<f64>,
    pub violations: Vec<AbaoViolation>,
}

impl AbaoReport {
    pub fn is_optimal(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that no single agent can lower `Q_mu(x, .)` by changing only its
/// own component at any state. Reports the best deviation per state and agent.
pub fn is_agent_by_agent_optimal(mdp: &DiscountedMdp, mu: &StationaryPolicy) -> Result<AbaoReport> {
    let value = evaluate_policy_discounted(mdp, mu)?;
    let mut violations = Vec::new();
    for x in 0..mdp.state_count() {
        let u = mu.control(x);
        let current_q = row_value(mdp, x, mdp.joint_index(x, u)?, &value);
        for agent in 0..mdp.agent_count() {
            let mut best: Option<(usize, f64)> = None;
            for &l in mdp.control_set(x, agent) {
                if l == u.component(agent) {
                    continue;
                }
                let q = row_value(
                    mdp,
                    x,
                    mdp.joint_index(x, &u.with_component(agent, l))?,
                    &value,
                );
                if q < current_q - VALUE_TOLERANCE && best.is_none_or(|(_, b)| q < b) {
                    best = Some((l, q));
                }
            }
            if let Some((better_label, better_q)) = best {
                violations.push(AbaoViolation {
                    state: x,
                    agent,
                    current_q,
                    better_label,
                    better_q,
                });
            }
        }
    }
    Ok(AbaoReport { value, violations })
}
