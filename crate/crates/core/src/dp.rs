//! Exact dynamic programming: backward induction, Bellman operators, policy
//! evaluation, value iteration and Q-factors. These are the ground truth the
//! rollout and policy-iteration results are checked against.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    argmin_lowest, cartesian_product, expected_stage_value, DiscountedMdp, FactoredControl,
    FactoredPolicy, FiniteHorizonModel, StationaryPolicy, VALUE_TOLERANCE,
};

/// Largest state count solved as a dense linear system.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;

/// Iteration cap for fixed-point iterations.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Cost-to-go tables `J_0, ..., J_N` of a finite-horizon model.
#[derive(Clone, Debug, PartialEq)]
pub struct StageValues {
    stages: Vec<Vec<f64>>,
}

impl StageValues {
    pub fn new(stages: Vec<Vec<f64>>) -> Self {
        Self { stages }
    }

    pub fn at(&self, stage: usize, state: usize) -> f64 {
        self.stages[stage][state]
    }

    pub fn stage(&self, stage: usize) -> &[f64] {
        &self.stages[stage]
    }

    /// Number of decision stages N.
    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }
}

fn check_value_length(expected: usize, j: &[f64]) -> Result<()> {
    if j.len() != expected {
        return Err(Error::ValueLength {
            expected,
            actual: j.len(),
        });
    }
    Ok(())
}

fn terminal_values<M: FiniteHorizonModel + ?Sized>(model: &M) -> Vec<f64> {
    let n = model.horizon();
    (0..model.state_count(n))
        .map(|x| model.terminal_cost(x))
        .collect()
}

/// Optimal cost-to-go `J*_0..J*_N` and an optimal policy; argmin ties go to
/// the lowest joint-control index.
pub fn backward_induction<M: FiniteHorizonModel + ?Sized>(
    model: &M,
) -> Result<(StageValues, FactoredPolicy)> {
    let horizon = model.horizon();
    let mut values = vec![Vec::new(); horizon + 1];
    let mut controls = vec![Vec::new(); horizon];
    values[horizon] = terminal_values(model);
    for k in (0..horizon).rev() {
        let next = &values[k + 1];
        let stage: Vec<(f64, FactoredControl)> = (0..model.state_count(k))
            .into_par_iter()
            .map(|x| -> Result<(f64, FactoredControl)> {
                let sets: Vec<_> = (0..model.agent_count())
                    .map(|a| model.control_set(k, x, a))
                    .collect();
                let mut joint = cartesian_product(&sets);
                let q = joint
                    .iter()
                    .map(|u| expected_stage_value(model, k, x, u, next))
                    .collect::<Result<Vec<f64>>>()?;
                let best = argmin_lowest(&q, VALUE_TOLERANCE);
                let min = q.iter().copied().fold(f64::INFINITY, f64::min);
                Ok((min, joint.swap_remove(best)))
            })
            .collect::<Result<_>>()?;
        let (v, u): (Vec<f64>, Vec<FactoredControl>) = stage.into_iter().unzip();
        values[k] = v;
        controls[k] = u;
    }
    Ok((StageValues::new(values), FactoredPolicy::new(controls)))
}

/// Exact cost-to-go `J_{k,pi}` of a finite-horizon policy.
pub fn evaluate_policy_finite<M: FiniteHorizonModel + ?Sized>(
    model: &M,
    policy: &FactoredPolicy,
) -> Result<StageValues> {
    let horizon = model.horizon();
    if policy.horizon() != horizon {
        return Err(Error::PolicyShape {
            expected: horizon,
            actual: policy.horizon(),
        });
    }
    let mut values = vec![Vec::new(); horizon + 1];
    values[horizon] = terminal_values(model);
    for k in (0..horizon).rev() {
        let next = &values[k + 1];
        let count = model.state_count(k);
        if policy.stage(k).len() != count {
            return Err(Error::PolicyShape {
                expected: count,
                actual: policy.stage(k).len(),
            });
        }
        values[k] = (0..count)
            .into_par_iter()
            .map(|x| expected_stage_value(model, k, x, policy.control(k, x), next))
            .collect::<Result<_>>()?;
    }
    Ok(StageValues::new(values))
}

pub(crate) fn row_value(mdp: &DiscountedMdp, x: usize, joint: usize, j: &[f64]) -> f64 {
    let alpha = mdp.discount();
    mdp.row(x, joint)
        .iter()
        .map(|t| t.probability * (t.cost + alpha * j[t.next_state]))
        .sum()
}

/// `Q(x, u) = sum_y p_xy(u) (g(x,u,y) + alpha J(y))`.
pub fn q_factor(mdp: &DiscountedMdp, j: &[f64], x: usize, u: &FactoredControl) -> Result<f64> {
    check_value_length(mdp.state_count(), j)?;
    let joint = mdp.joint_index(x, u)?;
    Ok(row_value(mdp, x, joint, j))
}

/// Q-factors of every state and joint control for a fixed `J`.
#[derive(Clone, Debug, PartialEq)]
pub struct QFactorTable {
    /// `[state][joint index]`, joint controls in lexicographic order.
    pub values: Vec<Vec<f64>>,
    pub source: Vec<f64>,
}

impl QFactorTable {
    pub fn get(&self, mdp: &DiscountedMdp, x: usize, u: &FactoredControl) -> Result<f64> {
        Ok(self.values[x][mdp.joint_index(x, u)?])
    }
}

pub fn q_factor_table(mdp: &DiscountedMdp, j: &[f64]) -> Result<QFactorTable> {
    check_value_length(mdp.state_count(), j)?;
    let values = (0..mdp.state_count())
        .map(|x| {
            (0..mdp.joint_count(x))
                .map(|u| row_value(mdp, x, u, j))
                .collect()
        })
        .collect();
    Ok(QFactorTable {
        values,
        source: j.to_vec(),
    })
}

/// `(TJ)(x) = min_u Q(x, u)` over the full joint control set.
pub fn bellman_t(mdp: &DiscountedMdp, j: &[f64]) -> Result<Vec<f64>> {
    check_value_length(mdp.state_count(), j)?;
    Ok((0..mdp.state_count())
        .into_par_iter()
        .map(|x| {
            (0..mdp.joint_count(x))
                .map(|u| row_value(mdp, x, u, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// `(T_mu J)(x) = Q(x, mu(x))`.
pub fn bellman_t_mu(mdp: &DiscountedMdp, mu: &StationaryPolicy, j: &[f64]) -> Result<Vec<f64>> {
    check_value_length(mdp.state_count(), j)?;
    mu.check_feasible(mdp)?;
    (0..mdp.state_count())
        .map(|x| Ok(row_value(mdp, x, mdp.joint_index(x, mu.control(x))?, j)))
        .collect()
}

/// Solves `J = g + M J` where `rows[i]` lists the nonzero `(column, M_ij)`.
pub(crate) fn solve_policy_system(rows: &[Vec<(usize, f64)>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rows.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, row) in rows.iter().enumerate() {
        for &(col, coeff) in row {
            a[(i, col)] -= coeff;
        }
    }
    let b = DVector::from_column_slice(rhs);
    let solution = a.lu().solve(&b).ok_or(Error::Convergence {
        iterations: 0,
        residual: f64::NAN,
    })?;
    Ok(solution.iter().copied().collect())
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `J_mu`, the unique fixed point of `T_mu`.
pub fn evaluate_policy_discounted(mdp: &DiscountedMdp, mu: &StationaryPolicy) -> Result<Vec<f64>> {
    mu.check_feasible(mdp)?;
    let n = mdp.state_count();
    let alpha = mdp.discount();
    let joints: Vec<usize> = (0..n)
        .map(|x| mdp.joint_index(x, mu.control(x)))
        .collect::<Result<_>>()?;
    if n <= DIRECT_SOLVE_LIMIT {
        let mut rows = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for (x, &u) in joints.iter().enumerate() {
            let row = mdp.row(x, u);
            rhs.push(row.iter().map(|t| t.probability * t.cost).sum());
            rows.push(
                row.iter()
                    .map(|t| (t.next_state, alpha * t.probability))
                    .collect(),
            );
        }
        return solve_policy_system(&rows, &rhs);
    }
    let mut j = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|x| row_value(mdp, x, joints[x], &j))
            .collect();
        let residual = sup_distance(&next, &j);
        j = next;
        if residual <= 1e-10 {
            return Ok(j);
        }
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        residual: f64::NAN,
    })
}

/// Iterates `T` from `J = 0` until the successive difference guarantees
/// `||J - J*|| <= tol`.
pub fn value_iteration(mdp: &DiscountedMdp, tol: f64) -> Result<Vec<f64>> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let alpha = mdp.discount();
    let threshold = tol * (1.0 - alpha) / (2.0 * alpha);
    let mut j = vec![0.0; mdp.state_count()];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let next = bellman_t(mdp, &j)?;
        residual = sup_distance(&next, &j);
        j = next;
        if residual <= threshold {
            return Ok(j);
        }
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// A policy attaining `min_u Q(x, u)` against `j`, lowest index on ties.
pub fn greedy_policy(mdp: &DiscountedMdp, j: &[f64]) -> Result<StationaryPolicy> {
    let table = q_factor_table(mdp, j)?;
    let controls = (0..mdp.state_count())
        .map(|x| {
            let best = argmin_lowest(&table.values[x], VALUE_TOLERANCE);
            Ok(mdp.joint_controls(x)?.swap_remove(best))
        })
        .collect::<Result<_>>()?;
    Ok(StationaryPolicy::new(controls))
}
