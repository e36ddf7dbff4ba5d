use crate::model::{
    cartesian_product, DiscountedMdp, Outcome, StageTable, TabularFiniteModel, Transition,
};

/// The two single-state, two-agent, binary-control models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CounterexampleKind {
    /// Stage cost 0 if the agents disagree, 1 if both pick 0, 2 if both pick 1.
    /// Rollout without coordination does worse than the base policy here.
    CoordinationFailure,
    /// Stage cost 2 if the agents disagree, 1 if both pick 0, 0 if both pick 1.
    /// `(0, 0)` is agent-by-agent optimal but not optimal.
    AgentByAgentTrap,
}

impl CounterexampleKind {
    pub fn stage_cost(self, u1: usize, u2: usize) -> f64 {
        match (self, u1 == u2, u1) {
            (CounterexampleKind::CoordinationFailure, false, _) => 0.0,
            (CounterexampleKind::CoordinationFailure, true, 0) => 1.0,
            (CounterexampleKind::CoordinationFailure, true, _) => 2.0,
            (CounterexampleKind::AgentByAgentTrap, false, _) => 2.0,
            (CounterexampleKind::AgentByAgentTrap, true, 0) => 1.0,
            (CounterexampleKind::AgentByAgentTrap, true, _) => 0.0,
        }
    }
}

fn binary_sets() -> Vec<Vec<usize>> {
    vec![vec![0, 1], vec![0, 1]]
}

/// Discounted rendering with discount `alpha`.
pub fn static_counterexample_mdp(kind: CounterexampleKind, alpha: f64) -> DiscountedMdp {
    DiscountedMdp::from_fn(alpha, vec![binary_sets()], |_, u| {
        vec![Transition {
            next_state: 0,
            probability: 1.0,
            cost: kind.stage_cost(u.component(0), u.component(1)),
        }]
    })
    .expect("static counterexample shape")
}

/// `horizon`-stage rendering with zero terminal cost.
pub fn static_counterexample_finite(
    kind: CounterexampleKind,
    horizon: usize,
) -> TabularFiniteModel {
    let outcomes = cartesian_product(&binary_sets())
        .iter()
        .map(|u| {
            vec![Outcome {
                disturbance: 0,
                probability: 1.0,
                next_state: 0,
                cost: kind.stage_cost(u.component(0), u.component(1)),
            }]
        })
        .collect();
    let table = StageTable {
        control_sets: vec![binary_sets()],
        outcomes: vec![outcomes],
    };
    TabularFiniteModel::stationary(2, horizon, table, vec![0.0])
        .and_then(|m| m.with_initial_state(0))
        .expect("static counterexample shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        enumerate_joint_controls, expected_stage_value, validate_discounted, validate_finite,
        FactoredControl,
    };

    #[test]
    fn cost_tables() {
        use CounterexampleKind::*;
        let table = |k: CounterexampleKind| {
            [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(a, b)| k.stage_cost(a, b))
        };
        assert_eq!(table(CoordinationFailure), [1.0, 0.0, 0.0, 2.0]);
        assert_eq!(table(AgentByAgentTrap), [1.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn renderings_are_valid() {
        for kind in [
            CounterexampleKind::CoordinationFailure,
            CounterexampleKind::AgentByAgentTrap,
        ] {
            assert!(validate_discounted(&static_counterexample_mdp(kind, 0.9)).is_valid());
            assert!(validate_finite(&static_counterexample_finite(kind, 5)).is_valid());
        }
    }

    #[test]
    fn joint_controls_in_order() {
        let model = static_counterexample_finite(CounterexampleKind::CoordinationFailure, 1);
        let joint: Vec<String> = enumerate_joint_controls(&model, 0, 0)
            .unwrap()
            .iter()
            .map(ToString::to_string)
            .collect();
        assert_eq!(joint, ["(0,0)", "(0,1)", "(1,0)", "(1,1)"]);
    }

    #[test]
    fn disagreeing_agents_cost_nothing() {
        let model = static_counterexample_finite(CounterexampleKind::CoordinationFailure, 3);
        let u = FactoredControl::new(vec![1, 0]);
        assert_eq!(expected_stage_value(&model, 0, 0, &u, &[0.0]).unwrap(), 0.0);
        let both = FactoredControl::new(vec![1, 1]);
        assert_eq!(
            expected_stage_value(&model, 0, 0, &both, &[0.0]).unwrap(),
            2.0
        );
    }
}
