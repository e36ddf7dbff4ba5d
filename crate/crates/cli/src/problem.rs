//! Problem files: TOML documents holding either a built-in environment
//! with parameters or an explicit tabular model.
//!
//! ```toml
//! [builtin]
//! name = "line-pursuit"
//!
//! [builtin.params]
//! length = 10
//! spiders = [5, 6]
//! flies = [0, 10]
//! ```
//!
//! ```toml
//! [tabular]
//! kind = "discounted"
//! agents = 2
//! discount = 0.9
//! states = ["s"]
//!
//! [[tabular.controls]]
//! state = "s"
//! sets = [[0, 1], [0, 1]]
//!
//! [[tabular.transitions]]
//! state = "s"
//! control = [0, 0]
//! next = "s"
//! probability = 1.0
//! cost = 1.0
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use agentwise::env::{
    static_counterexample_finite, static_counterexample_mdp, CounterexampleKind, FlyMotion,
    GridPursuit, GridPursuitParams, LinePursuit, LinePursuitParams, RandomMdpParams,
};
use agentwise::model::{
    cartesian_product, joint_index, validate_discounted, validate_finite, Outcome, StageTable,
    TabularFiniteModel, Transition, ValidationReport, Violation,
};
use agentwise::{DiscountedMdp, FactoredPolicy, FiniteHorizonModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Everything wrong with a problem file, with source lines where known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProblemError {
    pub source: Option<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ProblemError {
    fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            source: None,
            diagnostics: vec![Diagnostic {
                line,
                message: message.into(),
            }],
        }
    }

    fn with_source(mut self, source: &Path) -> Self {
        self.source = Some(source.display().to_string());
        self
    }
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = self.source.as_deref().unwrap_or("problem file");
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{prefix}: {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ProblemError {}

type ParseResult<T> = Result<T, ProblemError>;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularSection>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinSection {
    pub name: Spanned<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Spanned<toml::Table>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TabularKind {
    Discounted,
    Finite,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSection {
    pub kind: TabularKind,
    pub agents: usize,
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_costs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<String>,
    pub controls: Vec<Spanned<ControlEntry>>,
    pub transitions: Vec<Spanned<TransitionEntry>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ControlEntry {
    pub state: String,
    /// One control set per agent, in agent order.
    pub sets: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub state: String,
    /// Joint control as a component list in agent order.
    pub control: Vec<usize>,
    pub next: String,
    pub probability: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    length: usize,
    spiders: [usize; 2],
    flies: [usize; 2],
    horizon: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FlyMotionDoc {
    #[default]
    Stationary,
    RandomWalk,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    width: usize,
    height: usize,
    spiders: Vec<[usize; 2]>,
    fly: [usize; 2],
    #[serde(default)]
    fly_motion: FlyMotionDoc,
    stay_probability: Option<f64>,
    move_cost: Option<f64>,
    horizon: usize,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Form {
    Finite,
    Discounted,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CounterexampleDoc {
    form: Option<Form>,
    horizon: Option<usize>,
    discount: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomMdpDoc {
    states: usize,
    agents: usize,
    controls_per_agent: usize,
    cost_range: Option<[f64; 2]>,
    sparsity: Option<f64>,
    discount: Option<f64>,
    seed: u64,
}

/// A finite-horizon problem: a tabular model or a pursuit environment.
#[derive(Clone, Debug)]
pub enum FiniteProblem {
    Tabular(TabularFiniteModel),
    Line(LinePursuit),
    Grid(GridPursuit),
}

impl FiniteProblem {
    pub fn model(&self) -> &dyn FiniteHorizonModel {
        match self {
            FiniteProblem::Tabular(m) => m,
            FiniteProblem::Line(m) => m,
            FiniteProblem::Grid(m) => m,
        }
    }

    /// The greedy heuristic, for pursuit environments.
    pub fn greedy_base(&self) -> Option<FactoredPolicy> {
        match self {
            FiniteProblem::Tabular(_) => None,
            FiniteProblem::Line(m) => Some(agentwise::env::greedy_base_policy(m)),
            FiniteProblem::Grid(m) => Some(agentwise::env::greedy_base_policy(m)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Problem {
    Finite(FiniteProblem),
    Discounted(DiscountedMdp),
}

#[derive(Clone, Debug)]
pub struct LoadedProblem {
    pub problem: Problem,
    /// One-line summary for report headers.
    pub description: String,
}

/// Command-line overrides applied while building the model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub horizon: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, e: toml::de::Error) -> ProblemError {
    let line = e.span().map(|s| line_of(text, s.start));
    ProblemError::at(line, e.message().trim_end().to_string())
}

fn params_as<T: DeserializeOwned>(text: &str, b: &BuiltinSection) -> ParseResult<T> {
    let (line, table) = match &b.params {
        Some(p) => (line_of(text, p.span().start), p.get_ref().clone()),
        None => (line_of(text, b.name.span().start), toml::Table::new()),
    };
    let line = Some(line);
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| {
            ProblemError::at(line, format!("builtin params: {}", e.message().trim_end()))
        })
}

pub fn parse_problem_file(path: &Path, overrides: &Overrides) -> ParseResult<LoadedProblem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ProblemError::at(None, format!("cannot read file: {e}")).with_source(path))?;
    parse_problem_str(&text, overrides).map_err(|e| e.with_source(path))
}

pub fn parse_problem_str(text: &str, overrides: &Overrides) -> ParseResult<LoadedProblem> {
    let doc: ProblemFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    match (&doc.builtin, &doc.tabular) {
        (Some(b), None) => build_builtin(text, b, overrides),
        (None, Some(t)) => build_tabular(text, t, overrides),
        (Some(_), Some(_)) => Err(ProblemError::at(
            None,
            "a problem file holds either [builtin] or [tabular], not both",
        )),
        (None, None) => Err(ProblemError::at(
            None,
            "a problem file needs a [builtin] or [tabular] section",
        )),
    }
}

fn invalid(line: usize) -> impl Fn(agentwise::Error) -> ProblemError {
    move |e| ProblemError::at(Some(line), e.to_string())
}

fn check_discount(line: Option<usize>, alpha: f64) -> ParseResult<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(ProblemError::at(
            line,
            format!("discount must lie in (0,1), got {alpha}"),
        ))
    }
}

fn build_builtin(text: &str, b: &BuiltinSection, o: &Overrides) -> ParseResult<LoadedProblem> {
    let line = line_of(text, b.name.span().start);
    let name = b.name.get_ref().as_str();
    let loaded = match name {
        "line-pursuit" => {
            let p: LineDoc = params_as(text, b)?;
            let model = LinePursuit::new(LinePursuitParams {
                length: p.length,
                spiders: p.spiders,
                flies: p.flies,
                horizon: o.horizon.or(p.horizon),
            })
            .map_err(invalid(line))?;
            LoadedProblem {
                description: format!(
                    "line-pursuit (length {}, spiders {:?}, flies {:?}, horizon {})",
                    p.length,
                    p.spiders,
                    p.flies,
                    model.horizon()
                ),
                problem: Problem::Finite(FiniteProblem::Line(model)),
            }
        }
        "grid-pursuit" => {
            let p: GridDoc = params_as(text, b)?;
            let fly_motion = match p.fly_motion {
                FlyMotionDoc::Stationary => FlyMotion::Stationary,
                FlyMotionDoc::RandomWalk => FlyMotion::RandomWalk {
                    stay_probability: p.stay_probability.unwrap_or(0.2),
                },
            };
            let horizon = o.horizon.unwrap_or(p.horizon);
            let model = GridPursuit::new(GridPursuitParams {
                width: p.width,
                height: p.height,
                spiders: p.spiders.iter().map(|&[c, r]| (c, r)).collect(),
                fly: (p.fly[0], p.fly[1]),
                fly_motion,
                move_cost: p.move_cost.unwrap_or(1.0),
                horizon,
            })
            .map_err(invalid(line))?;
            LoadedProblem {
                description: format!(
                    "grid-pursuit ({}x{}, {} spiders, fly {:?}, {:?}, horizon {horizon})",
                    p.width,
                    p.height,
                    p.spiders.len(),
                    p.fly,
                    p.fly_motion
                ),
                problem: Problem::Finite(FiniteProblem::Grid(model)),
            }
        }
        "coordination-failure" | "agent-by-agent-trap" => {
            let kind = if name == "coordination-failure" {
                CounterexampleKind::CoordinationFailure
            } else {
                CounterexampleKind::AgentByAgentTrap
            };
            let p: CounterexampleDoc = params_as(text, b)?;
            let form = p.form.unwrap_or(match kind {
                CounterexampleKind::CoordinationFailure => Form::Finite,
                CounterexampleKind::AgentByAgentTrap => Form::Discounted,
            });
            match form {
                Form::Finite => {
                    let horizon = o.horizon.or(p.horizon).unwrap_or(5);
                    LoadedProblem {
                        description: format!("{name} (finite, horizon {horizon})"),
                        problem: Problem::Finite(FiniteProblem::Tabular(
                            static_counterexample_finite(kind, horizon),
                        )),
                    }
                }
                Form::Discounted => {
                    let alpha = check_discount(Some(line), o.alpha.or(p.discount).unwrap_or(0.9))?;
                    LoadedProblem {
                        description: format!("{name} (discounted, alpha {alpha})"),
                        problem: Problem::Discounted(static_counterexample_mdp(kind, alpha)),
                    }
                }
            }
        }
        "random-mdp" => {
            let p: RandomMdpDoc = params_as(text, b)?;
            if p.states == 0 || p.agents == 0 || p.controls_per_agent == 0 {
                return Err(ProblemError::at(
                    Some(line),
                    "states, agents and controls_per_agent must be positive",
                ));
            }
            let alpha = check_discount(Some(line), o.alpha.or(p.discount).unwrap_or(0.9))?;
            let [lo, hi] = p.cost_range.unwrap_or([0.0, 10.0]);
            let params = RandomMdpParams {
                states: p.states,
                agents: p.agents,
                controls_per_agent: p.controls_per_agent,
                cost_range: (lo, hi),
                sparsity: p.sparsity.unwrap_or(0.0),
                discount: alpha,
                seed: p.seed,
            };
            LoadedProblem {
                description: format!(
                    "random-mdp ({} states, {} agents, {} controls each, alpha {alpha}, seed {})",
                    p.states, p.agents, p.controls_per_agent, p.seed
                ),
                problem: Problem::Discounted(agentwise::env::random_mdp(&params)),
            }
        }
        other => {
            return Err(ProblemError::at(
                Some(line),
                format!(
                    "unknown builtin `{other}`; expected line-pursuit, grid-pursuit, \
                     coordination-failure, agent-by-agent-trap or random-mdp"
                ),
            ))
        }
    };
    let report = match &loaded.problem {
        Problem::Finite(f) => validate_finite(f.model()),
        Problem::Discounted(m) => validate_discounted(m),
    };
    if !report.is_valid() {
        return Err(ProblemError {
            source: None,
            diagnostics: report
                .violations
                .iter()
                .map(|v| Diagnostic {
                    line: Some(line),
                    message: format!("{v} ({})", v.kind()),
                })
                .collect(),
        });
    }
    Ok(loaded)
}

/// Source lines of tabular entries, for diagnostics.
struct Lines {
    section: usize,
    controls: HashMap<usize, usize>,
    rows: HashMap<(usize, Vec<usize>), usize>,
}

impl Lines {
    fn for_violation(&self, v: &Violation) -> usize {
        let row = |state: &usize, control: &agentwise::FactoredControl| {
            self.rows
                .get(&(*state, control.components().to_vec()))
                .or_else(|| self.controls.get(state))
                .copied()
        };
        match v {
            Violation::RowStochastic { state, control, .. }
            | Violation::NegativeProbability { state, control, .. }
            | Violation::SuccessorOutOfRange { state, control, .. }
            | Violation::NonFiniteCost { state, control, .. } => row(state, control),
            Violation::EmptyControlSet { state, .. }
            | Violation::DuplicateControl { state, .. } => self.controls.get(state).copied(),
            _ => None,
        }
        .unwrap_or(self.section)
    }
}

fn validation_error(report: &ValidationReport, lines: &Lines, names: &[String]) -> ProblemError {
    let describe = |v: &Violation| -> String {
        let named = |state: usize| format!("state '{}'", names[state]);
        match v {
            Violation::RowStochastic {
                state,
                control,
                sum,
                ..
            } => format!(
                "{} control {:?}: transition probabilities sum to {sum}",
                named(*state),
                control.components()
            ),
            Violation::NegativeProbability {
                state,
                control,
                probability,
                ..
            } => format!(
                "{} control {:?}: negative probability {probability}",
                named(*state),
                control.components()
            ),
            Violation::EmptyControlSet { state, agent, .. } => {
                format!(
                    "{}: agent {} has an empty control set",
                    named(*state),
                    agent + 1
                )
            }
            Violation::DuplicateControl {
                state,
                agent,
                label,
                ..
            } => format!(
                "{}: agent {} lists control {label} twice",
                named(*state),
                agent + 1
            ),
            other => other.to_string(),
        }
    };
    ProblemError {
        source: None,
        diagnostics: report
            .violations
            .iter()
            .map(|v| Diagnostic {
                line: Some(lines.for_violation(v)),
                message: format!("{} ({})", describe(v), v.kind()),
            })
            .collect(),
    }
}

struct TabularParts {
    control_sets: Vec<Vec<Vec<usize>>>,
    /// `[state][joint index]` as `(next, probability, cost)`.
    rows: Vec<Vec<Vec<(usize, f64, f64)>>>,
    lines: Lines,
}

fn tabular_parts(text: &str, t: &TabularSection, section: usize) -> ParseResult<TabularParts> {
    let mut errors = Vec::new();
    let index: HashMap<&str, usize> = t
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if index.len() != t.states.len() {
        errors.push(Diagnostic {
            line: Some(section),
            message: "state names must be distinct".into(),
        });
    }
    if t.states.is_empty() {
        errors.push(Diagnostic {
            line: Some(section),
            message: "at least one state is required".into(),
        });
    }
    if t.agents == 0 {
        errors.push(Diagnostic {
            line: Some(section),
            message: "agents must be positive".into(),
        });
    }
    let n = t.states.len();
    let mut control_sets: Vec<Option<Vec<Vec<usize>>>> = vec![None; n];
    let mut lines = Lines {
        section,
        controls: HashMap::new(),
        rows: HashMap::new(),
    };
    for entry in &t.controls {
        let line = line_of(text, entry.span().start);
        let c = entry.get_ref();
        let Some(&x) = index.get(c.state.as_str()) else {
            errors.push(Diagnostic {
                line: Some(line),
                message: format!("unknown state '{}'", c.state),
            });
            continue;
        };
        if c.sets.len() != t.agents {
            errors.push(Diagnostic {
                line: Some(line),
                message: format!(
                    "state '{}' lists {} control sets for {} agents",
                    c.state,
                    c.sets.len(),
                    t.agents
                ),
            });
            continue;
        }
        if control_sets[x].is_some() {
            errors.push(Diagnostic {
                line: Some(line),
                message: format!("control sets for state '{}' given twice", c.state),
            });
            continue;
        }
        control_sets[x] = Some(c.sets.clone());
        lines.controls.insert(x, line);
    }
    for (x, sets) in control_sets.iter().enumerate() {
        if sets.is_none() {
            errors.push(Diagnostic {
                line: Some(section),
                message: format!("no control sets given for state '{}'", t.states[x]),
            });
        }
    }
    if !errors.is_empty() {
        return Err(ProblemError {
            source: None,
            diagnostics: errors,
        });
    }
    let control_sets: Vec<Vec<Vec<usize>>> = control_sets.into_iter().map(Option::unwrap).collect();
    let mut rows: Vec<Vec<Vec<(usize, f64, f64)>>> = control_sets
        .iter()
        .map(|sets| vec![Vec::new(); cartesian_product(sets).len()])
        .collect();
    for entry in &t.transitions {
        let line = line_of(text, entry.span().start);
        let e = entry.get_ref();
        let (Some(&x), Some(&y)) = (index.get(e.state.as_str()), index.get(e.next.as_str())) else {
            let missing = if index.contains_key(e.state.as_str()) {
                &e.next
            } else {
                &e.state
            };
            errors.push(Diagnostic {
                line: Some(line),
                message: format!("unknown state '{missing}'"),
            });
            continue;
        };
        let control = agentwise::FactoredControl::new(e.control.clone());
        let Some(j) = joint_index(&control_sets[x], &control) else {
            errors.push(Diagnostic {
                line: Some(line),
                message: format!(
                    "control {:?} is not in the control sets of state '{}'",
                    e.control, e.state
                ),
            });
            continue;
        };
        lines.rows.entry((x, e.control.clone())).or_insert(line);
        rows[x][j].push((y, e.probability, e.cost));
    }
    if !errors.is_empty() {
        return Err(ProblemError {
            source: None,
            diagnostics: errors,
        });
    }
    Ok(TabularParts {
        control_sets,
        rows,
        lines,
    })
}

fn build_tabular(text: &str, t: &TabularSection, o: &Overrides) -> ParseResult<LoadedProblem> {
    let section = text
        .lines()
        .position(|l| l.trim() == "[tabular]")
        .map_or(1, |i| i + 1);
    let parts = tabular_parts(text, t, section)?;
    let n = t.states.len();
    let initial = match &t.initial_state {
        Some(name) => Some(t.states.iter().position(|s| s == name).ok_or_else(|| {
            ProblemError::at(Some(section), format!("unknown initial state '{name}'"))
        })?),
        None => None,
    };
    match t.kind {
        TabularKind::Discounted => {
            let alpha = o.alpha.or(t.discount).ok_or_else(|| {
                ProblemError::at(
                    Some(section),
                    "a discounted model needs `discount` (or --alpha)",
                )
            })?;
            let alpha = check_discount(Some(section), alpha)?;
            let rows = parts
                .rows
                .iter()
                .map(|per_state| {
                    per_state
                        .iter()
                        .map(|row| {
                            row.iter()
                                .map(|&(next_state, probability, cost)| Transition {
                                    next_state,
                                    probability,
                                    cost,
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let mdp = DiscountedMdp::new(t.agents, alpha, parts.control_sets, rows)
                .and_then(|m| m.with_state_names(t.states.clone()))
                .map_err(invalid(section))?;
            let report = validate_discounted(&mdp);
            if !report.is_valid() {
                return Err(validation_error(&report, &parts.lines, &t.states));
            }
            Ok(LoadedProblem {
                description: format!(
                    "tabular discounted ({n} states, {} agents, alpha {alpha})",
                    t.agents
                ),
                problem: Problem::Discounted(mdp),
            })
        }
        TabularKind::Finite => {
            let horizon = o.horizon.or(t.horizon).ok_or_else(|| {
                ProblemError::at(
                    Some(section),
                    "a finite-horizon model needs `horizon` (or --horizon)",
                )
            })?;
            let terminal = t.terminal_costs.clone().unwrap_or_else(|| vec![0.0; n]);
            let outcomes = parts
                .rows
                .iter()
                .map(|per_state| {
                    per_state
                        .iter()
                        .map(|row| {
                            row.iter()
                                .enumerate()
                                .map(|(w, &(next_state, probability, cost))| Outcome {
                                    disturbance: w,
                                    probability,
                                    next_state,
                                    cost,
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let table = StageTable {
                control_sets: parts.control_sets,
                outcomes,
            };
            let mut model = TabularFiniteModel::stationary(t.agents, horizon, table, terminal)
                .and_then(|m| m.with_state_names(t.states.clone()))
                .map_err(invalid(section))?;
            if let Some(x) = initial {
                model = model.with_initial_state(x).map_err(invalid(section))?;
            }
            let report = validate_finite(&model);
            if !report.is_valid() {
                let mut err = validation_error(&report, &parts.lines, &t.states);
                // identical rows repeat at every stage
                err.diagnostics.dedup();
                return Err(err);
            }
            Ok(LoadedProblem {
                description: format!(
                    "tabular finite ({n} states, {} agents, horizon {horizon})",
                    t.agents
                ),
                problem: Problem::Finite(FiniteProblem::Tabular(model)),
            })
        }
    }
}

fn names(count: usize, given: Option<&[String]>) -> Vec<String> {
    match given {
        Some(n) => n.to_vec(),
        None => (0..count).map(|x| x.to_string()).collect(),
    }
}

fn entries(
    states: &[String],
    control_sets: impl Fn(usize) -> Vec<Vec<usize>>,
    row: impl Fn(usize, usize) -> Vec<(usize, f64, f64)>,
) -> (Vec<Spanned<ControlEntry>>, Vec<Spanned<TransitionEntry>>) {
    let mut controls = Vec::new();
    let mut transitions = Vec::new();
    for (x, name) in states.iter().enumerate() {
        let sets = control_sets(x);
        for (j, u) in cartesian_product(&sets).iter().enumerate() {
            for (next, probability, cost) in row(x, j) {
                transitions.push(Spanned::new(
                    0..0,
                    TransitionEntry {
                        state: name.clone(),
                        control: u.components().to_vec(),
                        next: states[next].clone(),
                        probability,
                        cost,
                    },
                ));
            }
        }
        controls.push(Spanned::new(
            0..0,
            ControlEntry {
                state: name.clone(),
                sets,
            },
        ));
    }
    (controls, transitions)
}

/// The tabular problem-file section describing `problem`. Only discounted
/// models and stationary tabular finite models with a positive horizon
/// can be written back.
pub fn tabular_section(problem: &Problem) -> Option<TabularSection> {
    match problem {
        Problem::Discounted(mdp) => {
            let states = names(mdp.state_count(), mdp.state_names());
            let (controls, transitions) = entries(
                &states,
                |x| mdp.control_sets(x).to_vec(),
                |x, j| {
                    mdp.row(x, j)
                        .iter()
                        .map(|t| (t.next_state, t.probability, t.cost))
                        .collect()
                },
            );
            Some(TabularSection {
                kind: TabularKind::Discounted,
                agents: mdp.agent_count(),
                states,
                discount: Some(mdp.discount()),
                horizon: None,
                terminal_costs: None,
                initial_state: None,
                controls,
                transitions,
            })
        }
        Problem::Finite(FiniteProblem::Tabular(model))
            if model.is_stationary() && model.horizon() > 0 =>
        {
            let table = model.stage_table(0);
            let states = names(table.control_sets.len(), model.state_names());
            let (controls, transitions) = entries(
                &states,
                |x| table.control_sets[x].clone(),
                |x, j| {
                    table.outcomes[x][j]
                        .iter()
                        .map(|o| (o.next_state, o.probability, o.cost))
                        .collect()
                },
            );
            Some(TabularSection {
                kind: TabularKind::Finite,
                agents: model.agent_count(),
                discount: None,
                horizon: Some(model.horizon()),
                terminal_costs: Some(model.terminal_costs().to_vec()),
                initial_state: model.initial_state().map(|x| states[x].clone()),
                states,
                controls,
                transitions,
            })
        }
        Problem::Finite(_) => None,
    }
}

/// Serializes `problem` as a tabular problem file.
pub fn to_problem_toml(problem: &Problem) -> Option<String> {
    let file = ProblemFile {
        builtin: None,
        tabular: Some(tabular_section(problem)?),
    };
    Some(toml::to_string(&file).expect("problem file serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRAP: &str = r#"
[tabular]
kind = "discounted"
agents = 2
discount = 0.9
states = ["s"]

[[tabular.controls]]
state = "s"
sets = [[0, 1], [0, 1]]

[[tabular.transitions]]
state = "s"
control = [0, 0]
next = "s"
probability = 1.0
cost = 1.0

[[tabular.transitions]]
state = "s"
control = [0, 1]
next = "s"
probability = 1.0
cost = 2.0

[[tabular.transitions]]
state = "s"
control = [1, 0]
next = "s"
probability = 1.0
cost = 2.0

[[tabular.transitions]]
state = "s"
control = [1, 1]
next = "s"
probability = 1.0
cost = 0.0
"#;

    #[test]
    fn tabular_trap_matches_builtin() {
        let loaded = parse_problem_str(TRAP, &Overrides::default()).unwrap();
        let Problem::Discounted(mdp) = loaded.problem else {
            panic!("expected discounted")
        };
        let builtin = static_counterexample_mdp(CounterexampleKind::AgentByAgentTrap, 0.9);
        assert_eq!(mdp.discount(), builtin.discount());
        assert_eq!(mdp.control_sets(0), builtin.control_sets(0));
        for j in 0..4 {
            assert_eq!(mdp.row(0, j), builtin.row(0, j));
        }
    }

    #[test]
    fn bad_row_names_state_and_control() {
        let text = TRAP.replacen(
            "control = [0, 1]\nnext = \"s\"\nprobability = 1.0",
            "control = [0, 1]\nnext = \"s\"\nprobability = 0.5",
            1,
        );
        let err = parse_problem_str(&text, &Overrides::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("state 's' control [0, 1]"), "{msg}");
        assert!(msg.contains("sum to 0.5"), "{msg}");
        assert_eq!(err.diagnostics[0].line, Some(19));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = parse_problem_str("[tabular]\nkind = \n", &Overrides::default()).unwrap_err();
        assert_eq!(err.diagnostics[0].line, Some(2));
    }

    #[test]
    fn unknown_state_is_reported_at_its_entry() {
        let text = TRAP.replacen("next = \"s\"", "next = \"t\"", 1);
        let err = parse_problem_str(&text, &Overrides::default()).unwrap_err();
        assert_eq!(err.diagnostics[0].line, Some(12));
        assert!(err.to_string().contains("unknown state 't'"));
    }

    #[test]
    fn alpha_override() {
        let loaded = parse_problem_str(
            TRAP,
            &Overrides {
                alpha: Some(0.5),
                horizon: None,
            },
        )
        .unwrap();
        let Problem::Discounted(mdp) = loaded.problem else {
            panic!()
        };
        assert_eq!(mdp.discount(), 0.5);
        assert!(parse_problem_str(
            TRAP,
            &Overrides {
                alpha: Some(1.0),
                horizon: None
            }
        )
        .is_err());
    }

    #[test]
    fn round_trip() {
        let loaded = parse_problem_str(TRAP, &Overrides::default()).unwrap();
        let text = to_problem_toml(&loaded.problem).unwrap();
        let again = parse_problem_str(&text, &Overrides::default()).unwrap();
        let (Problem::Discounted(a), Problem::Discounted(b)) = (loaded.problem, again.problem)
        else {
            panic!()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_builtin() {
        let err =
            parse_problem_str("[builtin]\nname = \"maze\"\n", &Overrides::default()).unwrap_err();
        assert_eq!(err.diagnostics[0].line, Some(2));
    }
}
