use std::fmt;

use super::finite::control_sets;
use super::PROBABILITY_TOLERANCE;
use super::{cartesian_product, DiscountedMdp, FactoredControl, FiniteHorizonModel};
use crate::error::{Error, Result};

/// A broken model invariant. `stage` is `None` for discounted models.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RowStochastic {
        stage: Option<usize>,
        state: usize,
        control: FactoredControl,
        sum: f64,
    },
    NegativeProbability {
        stage: Option<usize>,
        state: usize,
        control: FactoredControl,
        probability: f64,
    },
    EmptyControlSet {
        stage: Option<usize>,
        state: usize,
        agent: usize,
    },
    DuplicateControl {
        stage: Option<usize>,
        state: usize,
        agent: usize,
        label: usize,
    },
    SuccessorOutOfRange {
        stage: Option<usize>,
        state: usize,
        control: FactoredControl,
        next_state: usize,
    },
    NonFiniteCost {
        stage: Option<usize>,
        state: usize,
        control: FactoredControl,
    },
    NonFiniteTerminalCost {
        state: usize,
    },
    Discount {
        discount: f64,
    },
    EmptyStateSet {
        stage: usize,
    },
}

impl Violation {
    /// Short name of the violated invariant.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::RowStochastic { .. } => "row-stochastic",
            Violation::NegativeProbability { .. } => "nonnegative probability",
            Violation::EmptyControlSet { .. } => "non-empty control set",
            Violation::DuplicateControl { .. } => "duplicate-free control set",
            Violation::SuccessorOutOfRange { .. } => "successor in state space",
            Violation::NonFiniteCost { .. } => "finite cost",
            Violation::NonFiniteTerminalCost { .. } => "finite terminal cost",
            Violation::Discount { .. } => "discount in (0,1)",
            Violation::EmptyStateSet { .. } => "non-empty state set",
        }
    }
}

fn at(stage: &Option<usize>, state: usize) -> String {
    match stage {
        Some(k) => format!("stage {k} state {state}"),
        None => format!("state {state}"),
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = self.kind();
        match self {
            Violation::RowStochastic {
                stage,
                state,
                control,
                sum,
            } => write!(
                f,
                "{kind}: {} control {control} has probabilities summing to {sum}",
                at(stage, *state)
            ),
            Violation::NegativeProbability {
                stage,
                state,
                control,
                probability,
            } => write!(
                f,
                "{kind}: {} control {control} has probability {probability}",
                at(stage, *state)
            ),
            Violation::EmptyControlSet {
                stage,
                state,
                agent,
            } => write!(f, "{kind}: {} agent {}", at(stage, *state), agent + 1),
            Violation::DuplicateControl {
                stage,
                state,
                agent,
                label,
            } => write!(
                f,
                "{kind}: {} agent {} repeats control {label}",
                at(stage, *state),
                agent + 1
            ),
            Violation::SuccessorOutOfRange {
                stage,
                state,
                control,
                next_state,
            } => write!(
                f,
                "{kind}: {} control {control} leads to unknown state {next_state}",
                at(stage, *state)
            ),
            Violation::NonFiniteCost {
                stage,
                state,
                control,
            } => write!(f, "{kind}: {} control {control}", at(stage, *state)),
            Violation::NonFiniteTerminalCost { state } => write!(f, "{kind}: state {state}"),
            Violation::Discount { discount } => write!(f, "{kind}: got {discount}"),
            Violation::EmptyStateSet { stage } => write!(f, "{kind}: stage {stage}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.violations.iter().map(Violation::kind).collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn check_control_sets<S: AsRef<[usize]>>(
    stage: Option<usize>,
    state: usize,
    sets: &[S],
    out: &mut Vec<Violation>,
) {
    for (agent, set) in sets.iter().enumerate() {
        let set = set.as_ref();
        if set.is_empty() {
            out.push(Violation::EmptyControlSet {
                stage,
                state,
                agent,
            });
        }
        for (i, &label) in set.iter().enumerate() {
            if set[..i].contains(&label) {
                out.push(Violation::DuplicateControl {
                    stage,
                    state,
                    agent,
                    label,
                });
            }
        }
    }
}

/// Checks one distribution given as `(probability, next_state, cost)` triples.
fn check_row(
    stage: Option<usize>,
    state: usize,
    control: &FactoredControl,
    entries: impl Iterator<Item = (f64, usize, f64)>,
    next_count: usize,
    out: &mut Vec<Violation>,
) {
    let mut sum = 0.0;
    for (p, next, cost) in entries {
        if p.is_nan() || p < 0.0 {
            out.push(Violation::NegativeProbability {
                stage,
                state,
                control: control.clone(),
                probability: p,
            });
        }
        if next >= next_count {
            out.push(Violation::SuccessorOutOfRange {
                stage,
                state,
                control: control.clone(),
                next_state: next,
            });
        }
        if !cost.is_finite() {
            out.push(Violation::NonFiniteCost {
                stage,
                state,
                control: control.clone(),
            });
        }
        sum += p;
    }
    if sum.is_nan() || (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        out.push(Violation::RowStochastic {
            stage,
            state,
            control: control.clone(),
            sum,
        });
    }
}

/// Reports every violated invariant of a finite-horizon model. Enumerates all
/// stages, states and joint controls.
pub fn validate_finite<M: FiniteHorizonModel + ?Sized>(model: &M) -> ValidationReport {
    let mut out = Vec::new();
    let horizon = model.horizon();
    for k in 0..=horizon {
        if model.state_count(k) == 0 {
            out.push(Violation::EmptyStateSet { stage: k });
        }
    }
    for k in 0..horizon {
        let next_count = model.state_count(k + 1);
        for x in 0..model.state_count(k) {
            let sets = control_sets(model, k, x);
            let before = out.len();
            check_control_sets(Some(k), x, &sets, &mut out);
            if out.len() > before {
                continue;
            }
            for u in cartesian_product(&sets) {
                let outcomes = model.outcomes(k, x, &u);
                check_row(
                    Some(k),
                    x,
                    &u,
                    outcomes
                        .iter()
                        .map(|o| (o.probability, o.next_state, o.cost)),
                    next_count,
                    &mut out,
                );
            }
        }
    }
    for x in 0..model.state_count(horizon) {
        if !model.terminal_cost(x).is_finite() {
            out.push(Violation::NonFiniteTerminalCost { state: x });
        }
    }
    ValidationReport { violations: out }
}

/// Reports every violated invariant of a discounted MDP.
pub fn validate_discounted(mdp: &DiscountedMdp) -> ValidationReport {
    let mut out = Vec::new();
    let alpha = mdp.discount();
    if !(alpha > 0.0 && alpha < 1.0) {
        out.push(Violation::Discount { discount: alpha });
    }
    let n = mdp.state_count();
    for x in 0..n {
        let sets = mdp.control_sets(x);
        let before = out.len();
        check_control_sets(None, x, sets, &mut out);
        if out.len() > before {
            continue;
        }
        for (j, u) in cartesian_product(sets).iter().enumerate() {
            check_row(
                None,
                x,
                u,
                mdp.row(x, j)
                    .iter()
                    .map(|t| (t.probability, t.next_state, t.cost)),
                n,
                &mut out,
            );
        }
    }
    ValidationReport { violations: out }
}
