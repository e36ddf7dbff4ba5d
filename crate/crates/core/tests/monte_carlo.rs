use std::sync::Arc;

use agentwise::env::{random_finite_model, random_finite_policy, RandomFiniteParams};
use agentwise::model::enumerate_joint_controls;
use agentwise::rollout::{MonteCarlo, QEvaluator};
use agentwise::{FactoredPolicy, FiniteHorizonModel, Rollout, RolloutConfig, Variant};

fn z_scores(
    model: &impl FiniteHorizonModel,
    base: &FactoredPolicy,
    seeds: std::ops::Range<u64>,
    configure: impl Fn(MonteCarlo) -> MonteCarlo,
) -> Vec<f64> {
    let exact = Rollout::new(model, base, RolloutConfig::new(Variant::Standard)).unwrap();
    let mut z = Vec::new();
    for seed in seeds {
        let mc = configure(MonteCarlo::new(2_000, seed));
        let sampled = Rollout::new(
            model,
            base,
            RolloutConfig::new(Variant::Standard).with_evaluator(QEvaluator::MonteCarlo(mc)),
        )
        .unwrap();
        for x in 0..model.state_count(0) {
            for u in enumerate_joint_controls(model, 0, x).unwrap() {
                let q = exact.q_factor(0, x, &u).unwrap();
                let est = sampled.mc_q_estimate(0, x, &u, None).unwrap();
                if est.std_dev > 0.0 {
                    z.push((est.mean - q) / est.std_error());
                }
            }
        }
    }
    z
}

fn model() -> (agentwise::model::TabularFiniteModel, FactoredPolicy) {
    let model = random_finite_model(&RandomFiniteParams {
        horizon: 4,
        max_states: 4,
        agents: 2,
        max_controls: 2,
        max_support: 3,
        seed: 77,
        ..Default::default()
    });
    let base = random_finite_policy(&model, 3);
    (model, base)
}

fn check_standard_normal(z: &[f64]) {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let tail = z.iter().filter(|v| v.abs() > 3.0).count() as f64 / n;
    assert!(z.len() >= 500, "{} scores", z.len());
    assert!(mean.abs() < 0.2, "mean z {mean}");
    assert!((0.75..1.25).contains(&var), "var z {var}");
    assert!(tail < 0.01, "tail rate {tail}");
}

#[test]
fn estimates_are_calibrated() {
    let (model, base) = model();
    check_standard_normal(&z_scores(&model, &base, 0..200, |mc| mc));
}

#[test]
fn truncation_with_exact_tail_is_unbiased() {
    let (model, base) = model();
    let exact = Rollout::new(&model, &base, RolloutConfig::new(Variant::Standard)).unwrap();
    let values: Vec<Vec<f64>> = (0..=model.horizon())
        .map(|k| {
            (0..model.state_count(k))
                .map(|x| exact.base_value(k, x))
                .collect()
        })
        .collect();
    let tail = Arc::new(move |k: usize, x: usize| values[k][x]);
    check_standard_normal(&z_scores(&model, &base, 1000..1200, |mut mc| {
        mc.truncation = Some(2);
        mc.terminal_approximation = Some(tail.clone());
        mc
    }));
}

#[test]
fn same_seed_same_estimate() {
    let (model, base) = model();
    let make = || {
        Rollout::new(
            &model,
            &base,
            RolloutConfig::new(Variant::Multiagent)
                .with_evaluator(QEvaluator::MonteCarlo(MonteCarlo::new(500, 9))),
        )
        .unwrap()
    };
    let (a, b) = (make(), make());
    for x in 0..model.state_count(0) {
        assert_eq!(a.control(0, x).unwrap(), b.control(0, x).unwrap());
        let u = base.control(0, x);
        assert_eq!(
            a.mc_q_estimate(0, x, u, None).unwrap(),
            b.mc_q_estimate(0, x, u, None).unwrap()
        );
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let (model, base) = model();
    for mc in [
        MonteCarlo::new(0, 1),
        MonteCarlo {
            truncation: Some(0),
            ..MonteCarlo::new(5, 1)
        },
    ] {
        let cfg =
            RolloutConfig::new(Variant::Multiagent).with_evaluator(QEvaluator::MonteCarlo(mc));
        assert!(Rollout::new(&model, &base, cfg).is_err());
    }
}
