//! Acceptance suite: one PASS/FAIL line per criterion. The process exits
//! nonzero on any failure except a sampling-based miss count that is
//! consistent with chance. Run with `cargo test -p agentwise --test acceptance`.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use agentwise::dp::{backward_induction, evaluate_policy_finite, value_iteration};
use agentwise::env::{
    greedy_base_policy, random_finite_model, random_finite_policy, random_mdp,
    random_stationary_policy, static_counterexample_finite, static_counterexample_mdp,
    CounterexampleKind, FlyMotion, GridPursuit, GridPursuitParams, GridState, LinePursuit,
    LinePursuitParams, LineState, RandomFiniteParams, RandomMdpParams,
};
use agentwise::expand::ExpandedFiniteModel;
use agentwise::model::{enumerate_joint_controls, Outcome, StageTable, TabularFiniteModel};
use agentwise::pi::{
    agent_by_agent_pi, is_agent_by_agent_optimal, standard_pi, DEFAULT_ITERATION_CAP,
};
use agentwise::rollout::{MonteCarlo, QEvaluator};
use agentwise::{
    AgentOrder, FactoredControl, FactoredPolicy, FiniteHorizonModel, Rollout, RolloutConfig,
    StationaryPolicy, Variant,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Failure {
    detail: String,
    /// Set by sampling-based criteria whose miss count is consistent with
    /// chance at the required confidence level.
    within_chance: bool,
}

impl From<String> for Failure {
    fn from(detail: String) -> Self {
        Self {
            detail,
            within_chance: false,
        }
    }
}

type Outcome_ = Result<String, Failure>;
type Criterion = (&'static str, Duration, fn() -> Outcome_);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), Failure> {
    if cond {
        Ok(())
    } else {
        Err(msg().into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> Failure {
    e.to_string().into()
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
fn binomial_tail(n: usize, p: f64, k: usize) -> f64 {
    let mut term = (1.0 - p).powi(n as i32);
    let mut below = 0.0;
    for i in 0..k {
        below += term;
        term *= (n - i) as f64 / (i + 1) as f64 * p / (1.0 - p);
    }
    (1.0 - below).max(0.0)
}

fn joint(a: usize, b: usize) -> FactoredControl {
    FactoredControl::new(vec![a, b])
}

fn shuffled_order(agents: usize, seed: u64) -> AgentOrder {
    let mut order: Vec<usize> = (0..agents).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    AgentOrder::new(order).expect("permutation")
}

fn coordination_failure() -> Outcome_ {
    let horizon = 5;
    let model = static_counterexample_finite(CounterexampleKind::CoordinationFailure, horizon);
    let base = FactoredPolicy::from_fn(&model, |_, _| joint(0, 0));
    let x0 = model.initial_state().unwrap_or(0);
    let base_cost = evaluate_policy_finite(&model, &base)
        .map_err(err)?
        .at(0, x0);
    let mut costs = Vec::new();
    for variant in [Variant::Uncoordinated, Variant::Multiagent] {
        let rollout = Rollout::new(&model, &base, RolloutConfig::new(variant)).map_err(err)?;
        let table = rollout.policy_table().map_err(err)?;
        costs.push(
            evaluate_policy_finite(&model, &table)
                .map_err(err)?
                .at(0, x0),
        );
    }
    ensure(
        base_cost == 5.0 && costs[0] == 10.0 && costs[1] == 0.0,
        || {
            format!(
                "base {base_cost}, uncoordinated {}, multiagent {}",
                costs[0], costs[1]
            )
        },
    )?;
    Ok(format!(
        "base {base_cost}, uncoordinated {}, multiagent {}",
        costs[0], costs[1]
    ))
}

fn agent_by_agent_trap() -> Outcome_ {
    let mdp = static_counterexample_mdp(CounterexampleKind::AgentByAgentTrap, 0.9);
    let start = StationaryPolicy::uniform(1, joint(0, 0));
    let abao = agent_by_agent_pi(
        &mdp,
        &start,
        &AgentOrder::identity(2),
        DEFAULT_ITERATION_CAP,
    )
    .map_err(err)?;
    let j = abao.final_value()[0];
    ensure(
        abao.converged()
            && abao.iterations() == 1
            && abao.final_policy().control(0) == &joint(0, 0)
            && (j - 10.0).abs() <= 1e-9,
        || {
            format!(
                "agent-by-agent ended at {} after {} steps, J = {j}",
                abao.final_policy(),
                abao.iterations()
            )
        },
    )?;
    let std = standard_pi(&mdp, &start, DEFAULT_ITERATION_CAP).map_err(err)?;
    let js = std.final_value()[0];
    ensure(
        std.converged() && std.final_policy().control(0) == &joint(1, 1) && js.abs() <= 1e-9,
        || format!("standard ended at {} with J = {js}", std.final_policy()),
    )?;
    Ok(format!(
        "agent-by-agent stops at (0,0) with J = {j:.12}; standard reaches (1,1) with J = {js:.1e}"
    ))
}

fn order_dependence() -> Outcome_ {
    let mdp = static_counterexample_mdp(CounterexampleKind::AgentByAgentTrap, 0.9);
    let start = StationaryPolicy::uniform(1, joint(1, 0));
    let mut ends = Vec::new();
    for (order, expected) in [(vec![0, 1], joint(0, 0)), (vec![1, 0], joint(1, 1))] {
        let order = AgentOrder::new(order).map_err(err)?;
        let trace = agent_by_agent_pi(&mdp, &start, &order, DEFAULT_ITERATION_CAP).map_err(err)?;
        let end = trace.final_policy().control(0).clone();
        ensure(trace.converged() && end == expected, || {
            format!("order {order} ended at {end}")
        })?;
        ends.push(format!("order {order} -> {end}"));
    }
    Ok(ends.join(", "))
}

fn criterion4_params(seed: u64) -> RandomFiniteParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    RandomFiniteParams {
        horizon: rng.gen_range(1..=6),
        max_states: rng.gen_range(1..=30),
        agents: rng.gen_range(1..=3),
        max_controls: 3,
        max_support: 3,
        cost_range: (0.0, 10.0),
        integer_costs: seed.is_multiple_of(2),
        seed,
    }
}

fn cost_improvement() -> Outcome_ {
    let mut checked = 0usize;
    for seed in 0..200u64 {
        let model = random_finite_model(&criterion4_params(seed));
        let base = random_finite_policy(&model, seed.wrapping_add(1000));
        let base_cost = evaluate_policy_finite(&model, &base).map_err(err)?;
        for variant in [Variant::Multiagent, Variant::Standard] {
            let rollout = Rollout::new(&model, &base, RolloutConfig::new(variant)).map_err(err)?;
            let cost = evaluate_policy_finite(&model, &rollout.policy_table().map_err(err)?)
                .map_err(err)?;
            for k in 0..=model.horizon() {
                for x in 0..model.state_count(k) {
                    let (r, b) = (cost.at(k, x), base_cost.at(k, x));
                    ensure(r <= b + 1e-9, || {
                        format!("seed {seed} {variant}: ({k},{x}) rollout {r} > base {b}")
                    })?;
                    checked += 1;
                }
            }
        }
    }
    Ok(format!(
        "200 instances, {checked} (variant, stage, state) comparisons"
    ))
}

fn reformulation_equivalence() -> Outcome_ {
    let mut decisions = 0usize;
    for seed in 0..50u64 {
        let params = RandomFiniteParams {
            integer_costs: true,
            ..criterion4_params(seed + 500)
        };
        let model = random_finite_model(&params);
        let base = random_finite_policy(&model, seed);
        let m = model.agent_count();
        let order = shuffled_order(m, seed);
        let multi = Rollout::new(
            &model,
            &base,
            RolloutConfig::new(Variant::Multiagent).with_order(order.clone()),
        )
        .map_err(err)?;
        let expanded = ExpandedFiniteModel::new(&model, order.clone()).map_err(err)?;
        let embedded = expanded.embed_policy(&base);
        let standard = Rollout::new(&expanded, &embedded, RolloutConfig::new(Variant::Standard))
            .map_err(err)?;
        for k in 0..model.horizon() {
            for x in 0..model.state_count(k) {
                let want = multi.multiagent_control(k, x).map_err(err)?;
                let mut got = vec![0; m];
                let mut node = x;
                for (depth, &agent) in order.agents().iter().enumerate() {
                    let stage = expanded.stage_of(k) + depth;
                    let c = standard.standard_control(stage, node).map_err(err)?;
                    got[agent] = c.component(0);
                    if depth + 1 < m {
                        node = expanded.outcomes(stage, node, &c)[0].next_state;
                    }
                }
                let got = FactoredControl::new(got);
                ensure(got == want, || {
                    format!("seed {seed} ({k},{x}): expanded {got} vs multiagent {want}")
                })?;
                decisions += 1;
            }
        }
    }
    Ok(format!("50 instances, {decisions} decisions identical"))
}

fn complexity_counters() -> Outcome_ {
    let model = GridPursuit::new(GridPursuitParams {
        width: 3,
        height: 3,
        spiders: vec![(1, 1); 3],
        fly: (0, 0),
        fly_motion: FlyMotion::RandomWalk {
            stay_probability: 0.2,
        },
        move_cost: 1.0,
        horizon: 4,
    })
    .map_err(err)?;
    let base = greedy_base_policy(&model);
    let centre = model.cell((1, 1));
    let mut points = 0;
    for (variant, expected) in [(Variant::Standard, 125u64), (Variant::Multiagent, 15u64)] {
        let rollout = Rollout::new(&model, &base, RolloutConfig::new(variant)).map_err(err)?;
        for k in 0..model.horizon() {
            for fly in 0..9 {
                for captured in [false, true] {
                    let x = model.encode(&GridState {
                        spiders: vec![centre; 3],
                        fly,
                        captured,
                    });
                    let before = rollout.evaluations();
                    rollout.control(k, x).map_err(err)?;
                    let used = rollout.evaluations() - before;
                    ensure(used == expected, || {
                        format!("{variant} at ({k},{x}) used {used}, expected {expected}")
                    })?;
                    points += 1;
                }
            }
        }
    }
    Ok(format!(
        "standard 125 and multiagent 15 per point at {} points each",
        points / 2
    ))
}

fn line_optimality() -> Outcome_ {
    let flies = [0, 10];
    let model = LinePursuit::new(LinePursuitParams {
        length: 10,
        spiders: [5, 6],
        flies,
        horizon: None,
    })
    .map_err(err)?;
    let (optimal, _) = backward_induction(&model).map_err(err)?;
    let base = greedy_base_policy(&model);
    let rollout =
        Rollout::new(&model, &base, RolloutConfig::new(Variant::Multiagent)).map_err(err)?;
    let cost =
        evaluate_policy_finite(&model, &rollout.policy_table().map_err(err)?).map_err(err)?;
    let mut starts = 0;
    for a in 0..=10 {
        for b in 0..=10 {
            let spiders = [a, b];
            let x = model.encode(&LineState {
                spiders,
                alive: flies.map(|f| !spiders.contains(&f)),
            });
            let (r, j) = (cost.at(0, x), optimal.at(0, x));
            ensure(r == j, || {
                format!("spiders {spiders:?}: rollout {r} vs optimal {j}")
            })?;
            starts += 1;
        }
    }
    Ok(format!(
        "{starts} initial placements, flies at {flies:?}, rollout cost = optimal everywhere"
    ))
}

fn pi_properties() -> Outcome_ {
    let mut iterations = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11CE);
        let params = RandomMdpParams {
            states: rng.gen_range(1..=12),
            agents: rng.gen_range(1..=3),
            controls_per_agent: rng.gen_range(1..=3),
            sparsity: rng.gen_range(0.0..0.7),
            discount: 0.9,
            seed,
            ..Default::default()
        };
        let mdp = random_mdp(&params);
        let mu0 = random_stationary_policy(&mdp, seed);
        let order = shuffled_order(params.agents, seed);
        let trace = agent_by_agent_pi(&mdp, &mu0, &order, DEFAULT_ITERATION_CAP).map_err(err)?;
        ensure(trace.converged(), || {
            format!("seed {seed}: hit the iteration cap")
        })?;
        let mut seen = HashSet::new();
        for it in &trace.iterates {
            ensure(seen.insert(it.policy.controls().to_vec()), || {
                format!("seed {seed}: policy repeated at iteration {}", it.iteration)
            })?;
        }
        for pair in trace.iterates.windows(2) {
            for x in 0..mdp.state_count() {
                ensure(pair[1].value[x] <= pair[0].value[x] + 1e-9, || {
                    format!(
                        "seed {seed}: J increased at state {x}, iteration {}",
                        pair[1].iteration
                    )
                })?;
            }
        }
        let report = is_agent_by_agent_optimal(&mdp, trace.final_policy()).map_err(err)?;
        ensure(report.is_optimal(), || {
            format!("seed {seed}: agent-by-agent terminal policy fails the check")
        })?;
        let std = standard_pi(&mdp, &mu0, DEFAULT_ITERATION_CAP).map_err(err)?;
        let report = is_agent_by_agent_optimal(&mdp, std.final_policy()).map_err(err)?;
        ensure(std.converged() && report.is_optimal(), || {
            format!("seed {seed}: standard terminal policy fails the check")
        })?;
        iterations += trace.iterations();
    }
    Ok(format!(
        "100 MDPs, {iterations} agent-by-agent improvement steps in total"
    ))
}

/// A fixed four-state, two-agent stochastic model with horizon 3.
fn mc_model() -> TabularFiniteModel {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let states = 4;
    let control_sets = vec![vec![vec![0, 1], vec![0, 1]]; states];
    let outcomes = (0..states)
        .map(|_| {
            (0..4)
                .map(|_| {
                    let weights: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
                    let total: f64 = weights.iter().sum();
                    weights
                        .iter()
                        .enumerate()
                        .map(|(w, p)| Outcome {
                            disturbance: w,
                            probability: p / total,
                            next_state: rng.gen_range(0..states),
                            cost: rng.gen_range(0.0..10.0),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let terminal = (0..states).map(|_| rng.gen_range(0.0..5.0)).collect();
    TabularFiniteModel::stationary(
        2,
        3,
        StageTable {
            control_sets,
            outcomes,
        },
        terminal,
    )
    .expect("fixed model shape")
}

fn monte_carlo_consistency() -> Outcome_ {
    // two-sided normal tail beyond 3 standard errors
    const MISS_RATE: f64 = 0.0027;
    let model = mc_model();
    let base = random_finite_policy(&model, 11);
    let exact = Rollout::new(&model, &base, RolloutConfig::new(Variant::Standard)).map_err(err)?;
    let points: Vec<(usize, FactoredControl, f64)> = (0..model.state_count(0))
        .flat_map(|x| {
            let exact = &exact;
            enumerate_joint_controls(&model, 0, x)
                .expect("state exists")
                .into_iter()
                .map(move |u| {
                    let q = exact.q_factor(0, x, &u).expect("feasible");
                    (x, u, q)
                })
        })
        .collect();
    let z_scores = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let sampled = Rollout::new(
                &model,
                &base,
                RolloutConfig::new(Variant::Standard)
                    .with_evaluator(QEvaluator::MonteCarlo(MonteCarlo::new(10_000, seed))),
            )?;
            points
                .iter()
                .map(|(x, u, q)| {
                    let est = sampled.mc_q_estimate(0, *x, u, None)?;
                    Ok((seed, *x, u.clone(), (est.mean - q).abs() / est.std_error()))
                })
                .collect::<agentwise::Result<Vec<_>>>()
        })
        .collect::<agentwise::Result<Vec<_>>>()
        .map_err(err)?;
    let z_scores: Vec<_> = z_scores.into_iter().flatten().collect();
    let checks = z_scores.len();
    let worst = z_scores.iter().map(|s| s.3).fold(0.0, f64::max);
    let misses: Vec<String> = z_scores
        .iter()
        .filter(|s| s.3 > 3.0)
        .map(|(seed, x, u, z)| format!("seed {seed} x={x} u={u}: z={z:.2}"))
        .collect();
    if misses.is_empty() {
        return Ok(format!(
            "{checks} estimates, largest deviation {worst:.2} SE"
        ));
    }
    let p_value = binomial_tail(checks, MISS_RATE, misses.len());
    Err(Failure {
        detail: format!(
            "{} of {checks} estimates outside 3 SE ({}); {:.2} expected by chance, P(>= {}) = {p_value:.2}",
            misses.len(),
            misses.join("; "),
            checks as f64 * MISS_RATE,
            misses.len()
        ),
        within_chance: p_value >= 0.001,
    })
}

fn oracle_coherence() -> Outcome_ {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0DE);
        let mdp = random_mdp(&RandomMdpParams {
            states: rng.gen_range(1..=15),
            agents: rng.gen_range(1..=3),
            controls_per_agent: rng.gen_range(1..=3),
            sparsity: rng.gen_range(0.0..0.7),
            discount: rng.gen_range(0.5..0.95),
            seed,
            ..Default::default()
        });
        let vi = value_iteration(&mdp, 1e-8).map_err(err)?;
        let pi = standard_pi(
            &mdp,
            &random_stationary_policy(&mdp, seed),
            DEFAULT_ITERATION_CAP,
        )
        .map_err(err)?;
        let d = vi
            .iter()
            .zip(pi.final_value())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(d <= 1e-6, || format!("seed {seed}: sup distance {d:e}"))?;
        worst = worst.max(d);
    }
    Ok(format!("50 instances, largest sup distance {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "coordination failure costs",
            Duration::from_secs(1),
            coordination_failure,
        ),
        (
            "agent-by-agent trap",
            Duration::from_secs(1),
            agent_by_agent_trap,
        ),
        (
            "agent order dependence",
            Duration::from_secs(1),
            order_dependence,
        ),
        (
            "rollout cost improvement",
            Duration::from_secs(120),
            cost_improvement,
        ),
        (
            "reformulation equivalence",
            Duration::from_secs(60),
            reformulation_equivalence,
        ),
        (
            "Q-factor evaluation counts",
            Duration::from_secs(10),
            complexity_counters,
        ),
        (
            "line pursuit optimality",
            Duration::from_secs(60),
            line_optimality,
        ),
        (
            "agent-by-agent PI properties",
            Duration::from_secs(180),
            pi_properties,
        ),
        (
            "Monte Carlo consistency",
            Duration::from_secs(60),
            monte_carlo_consistency,
        ),
        (
            "oracle coherence",
            Duration::from_secs(60),
            oracle_coherence,
        ),
    ];
    let mut failed = 0;
    let mut fatal = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > *limit => {
                Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}").into())
            }
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({elapsed:.2?})", i + 1),
            Err(failure) => {
                failed += 1;
                if !failure.within_chance {
                    fatal += 1;
                }
                println!(
                    "FAIL {:>2} {name}: {} ({elapsed:.2?})",
                    i + 1,
                    failure.detail
                );
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > fatal {
        println!(
            "{} failure(s) consistent with sampling noise; not treated as fatal",
            failed - fatal
        );
    }
    if fatal == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
