//! Seeded random instance generators for property suites.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    cartesian_product, DiscountedMdp, FactoredControl, FactoredPolicy, FiniteHorizonModel, Outcome,
    StageTable, StationaryPolicy, TabularFiniteModel, Transition,
};

#[derive(Clone, Debug, PartialEq)]
pub struct RandomMdpParams {
    pub states: usize,
    pub agents: usize,
    /// Size of every per-agent control set.
    pub controls_per_agent: usize,
    pub cost_range: (f64, f64),
    /// Probability that a successor is dropped from a row (at least one is
    /// always kept).
    pub sparsity: f64,
    pub discount: f64,
    pub seed: u64,
}

impl Default for RandomMdpParams {
    fn default() -> Self {
        Self {
            states: 5,
            agents: 2,
            controls_per_agent: 2,
            cost_range: (0.0, 10.0),
            sparsity: 0.0,
            discount: 0.9,
            seed: 0,
        }
    }
}

fn cost<R: Rng>(rng: &mut R, (lo, hi): (f64, f64), integer: bool) -> f64 {
    if hi <= lo {
        return lo;
    }
    if integer {
        rng.gen_range(lo.ceil() as i64..=hi.floor() as i64) as f64
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Normalized uniform weights over `count` slots with some slots dropped.
fn random_distribution<R: Rng>(rng: &mut R, count: usize, sparsity: f64) -> Vec<(usize, f64)> {
    let keep = rng.gen_range(0..count);
    let mut weights: Vec<(usize, f64)> = (0..count)
        .filter_map(|y| {
            let w = 1.0 - rng.gen::<f64>();
            (y == keep || rng.gen::<f64>() >= sparsity).then_some((y, w))
        })
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut weights {
        *w /= total;
    }
    weights
}

/// A random discounted MDP; identical parameters give identical models.
pub fn random_mdp(p: &RandomMdpParams) -> DiscountedMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let sets = vec![vec![(0..p.controls_per_agent).collect::<Vec<_>>(); p.agents]; p.states];
    DiscountedMdp::from_fn(p.discount, sets, |_, _| {
        random_distribution(&mut rng, p.states, p.sparsity)
            .into_iter()
            .map(|(y, probability)| Transition {
                next_state: y,
                probability,
                cost: cost(&mut rng, p.cost_range, false),
            })
            .collect()
    })
    .expect("random MDP shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomFiniteParams {
    pub horizon: usize,
    /// Per-stage state counts are drawn from `1..=max_states`.
    pub max_states: usize,
    pub agents: usize,
    /// Per-agent control-set sizes are drawn from `1..=max_controls`.
    pub max_controls: usize,
    /// Disturbance support sizes are drawn from `1..=max_support`.
    pub max_support: usize,
    pub cost_range: (f64, f64),
    /// Round costs to integers, which makes argmin ties common.
    pub integer_costs: bool,
    pub seed: u64,
}

impl Default for RandomFiniteParams {
    fn default() -> Self {
        Self {
            horizon: 4,
            max_states: 10,
            agents: 2,
            max_controls: 3,
            max_support: 3,
            cost_range: (0.0, 10.0),
            integer_costs: false,
            seed: 0,
        }
    }
}

/// A random finite-horizon model with stage-dependent state sets. Control
/// labels are distinct but not `0..s`, so label order and stored order differ.
pub fn random_finite_model(p: &RandomFiniteParams) -> TabularFiniteModel {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let counts: Vec<usize> = (0..=p.horizon)
        .map(|_| rng.gen_range(1..=p.max_states.max(1)))
        .collect();
    let label_pool: Vec<usize> = (0..2 * p.max_controls.max(1)).collect();
    let stages = (0..p.horizon)
        .map(|k| {
            let mut control_sets = Vec::with_capacity(counts[k]);
            let mut outcomes = Vec::with_capacity(counts[k]);
            for _ in 0..counts[k] {
                let sets: Vec<Vec<usize>> = (0..p.agents)
                    .map(|_| {
                        let size = rng.gen_range(1..=p.max_controls.max(1));
                        label_pool
                            .choose_multiple(&mut rng, size)
                            .copied()
                            .collect()
                    })
                    .collect();
                let rows = cartesian_product(&sets)
                    .iter()
                    .map(|_| {
                        let support = rng.gen_range(1..=p.max_support.max(1));
                        let dist = random_distribution(&mut rng, support, 0.0);
                        dist.into_iter()
                            .map(|(w, probability)| Outcome {
                                disturbance: w,
                                probability,
                                next_state: rng.gen_range(0..counts[k + 1]),
                                cost: cost(&mut rng, p.cost_range, p.integer_costs),
                            })
                            .collect()
                    })
                    .collect();
                control_sets.push(sets);
                outcomes.push(rows);
            }
            StageTable {
                control_sets,
                outcomes,
            }
        })
        .collect();
    let terminal = (0..counts[p.horizon])
        .map(|_| cost(&mut rng, p.cost_range, p.integer_costs))
        .collect();
    TabularFiniteModel::new(p.agents, stages, terminal).expect("random model shape")
}

/// A uniformly random feasible policy.
pub fn random_finite_policy<M: FiniteHorizonModel + ?Sized>(
    model: &M,
    seed: u64,
) -> FactoredPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FactoredPolicy::from_fn(model, |k, x| {
        FactoredControl::new(
            (0..model.agent_count())
                .map(|a| {
                    *model
                        .control_set(k, x, a)
                        .choose(&mut rng)
                        .expect("empty control set")
                })
                .collect(),
        )
    })
}

/// A uniformly random stationary policy.
pub fn random_stationary_policy(mdp: &DiscountedMdp, seed: u64) -> StationaryPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StationaryPolicy::from_fn(mdp.state_count(), |x| {
        FactoredControl::new(
            (0..mdp.agent_count())
                .map(|a| {
                    *mdp.control_set(x, a)
                        .choose(&mut rng)
                        .expect("empty control set")
                })
                .collect(),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::evaluate_policy_discounted;
    use crate::model::{validate_discounted, validate_finite};
    use crate::pi::standard_pi;

    #[test]
    fn same_seed_same_model() {
        let p = RandomMdpParams {
            seed: 7,
            ..Default::default()
        };
        assert_eq!(random_mdp(&p), random_mdp(&p));
        let f = RandomFiniteParams {
            seed: 7,
            ..Default::default()
        };
        assert_eq!(random_finite_model(&f), random_finite_model(&f));
    }

    #[test]
    fn generated_models_validate() {
        for seed in 0..100 {
            let mdp = random_mdp(&RandomMdpParams {
                states: 10,
                agents: 2,
                controls_per_agent: 3,
                sparsity: 0.5,
                seed,
                ..Default::default()
            });
            let report = validate_discounted(&mdp);
            assert!(report.is_valid(), "seed {seed}: {report}");
            let model = random_finite_model(&RandomFiniteParams {
                seed,
                integer_costs: seed % 2 == 0,
                ..Default::default()
            });
            let report = validate_finite(&model);
            assert!(report.is_valid(), "seed {seed}: {report}");
        }
    }

    #[test]
    fn trivial_mdp_has_one_policy() {
        let mdp = random_mdp(&RandomMdpParams {
            states: 1,
            agents: 1,
            controls_per_agent: 1,
            seed: 1,
            ..Default::default()
        });
        let mu = random_stationary_policy(&mdp, 0);
        let trace = standard_pi(&mdp, &mu, 10).unwrap();
        assert_eq!(trace.iterations(), 1);
        assert!(trace.converged());
        let _ = evaluate_policy_discounted(&mdp, &mu).unwrap();
    }
}
