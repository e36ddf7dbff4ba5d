use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use agentwise::dp::{
    backward_induction, evaluate_policy_discounted, evaluate_policy_finite, value_iteration,
};
use agentwise::pi::{agent_by_agent_pi, is_agent_by_agent_optimal, standard_pi, PiTrace};
use agentwise::rollout::{MonteCarlo, QEvaluator};
use agentwise::{
    AgentOrder, DiscountedMdp, FactoredControl, FactoredPolicy, FiniteHorizonModel, Rollout,
    RolloutConfig, StationaryPolicy, Variant,
};

use crate::problem::{LoadedProblem, Problem};
use crate::report::{ExperimentReport, ReportRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Exact,
    Rollout,
    Pi,
    Compare,
    CheckAbao,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Rollout => "rollout",
            Method::Pi => "pi",
            Method::Compare => "compare",
            Method::CheckAbao => "check-abao",
        }
    }
}

/// Rollout variants plus the two policy-iteration improvement rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum VariantArg {
    Standard,
    Multiagent,
    Uncoordinated,
    AgentByAgent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seed: u64,
    /// 0-based agent order.
    pub order: Option<Vec<usize>>,
    pub variant: Option<VariantArg>,
    /// Switches rollout to Monte Carlo Q-factors.
    pub trajectories: Option<usize>,
    pub truncate: Option<usize>,
    /// Simulated episodes per state for Monte Carlo rollout values.
    pub episodes: usize,
    /// Joint control used at every state as the base or initial policy.
    pub policy: Option<Vec<usize>>,
    pub iteration_cap: usize,
}

impl ExperimentConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            seed: 0,
            order: None,
            variant: None,
            trajectories: None,
            truncate: None,
            episodes: 1,
            policy: None,
            iteration_cap: agentwise::pi::DEFAULT_ITERATION_CAP,
        }
    }
}

struct Builder<'a> {
    config: &'a ExperimentConfig,
    report: ExperimentReport,
}

impl Builder<'_> {
    fn row(&mut self, method: &str, state: String, value: f64, q_evals: u64, iterations: usize) {
        self.report.rows.push(ReportRow {
            method: method.to_string(),
            state,
            value,
            q_evals,
            iterations,
            seed: self.config.seed,
        });
    }

    fn echo(&mut self, key: &str, value: impl ToString) {
        self.report
            .config
            .push((key.to_string(), value.to_string()));
    }
}

fn agent_order(config: &ExperimentConfig, agents: usize) -> Result<AgentOrder> {
    match &config.order {
        Some(o) => AgentOrder::new(o.clone())
            .ok()
            .filter(|o| o.len() == agents)
            .ok_or_else(|| {
                anyhow!(
                    "--order must be a permutation of 1..={agents}, got {}",
                    o.iter()
                        .map(|a| (a + 1).to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                )
            }),
        None => Ok(AgentOrder::identity(agents)),
    }
}

pub fn run_experiment(
    problem: &LoadedProblem,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let mut b = Builder {
        config,
        report: ExperimentReport {
            command: config.method.name().to_string(),
            problem: problem.description.clone(),
            seed: config.seed,
            config: Vec::new(),
            rows: Vec::new(),
            notes: Vec::new(),
        },
    };
    match (&problem.problem, config.method) {
        (Problem::Finite(f), Method::Exact) => finite_exact(&mut b, f.model()),
        (Problem::Finite(f), Method::Rollout | Method::Compare) => {
            let base = finite_base(f, config)?;
            finite_rollout(&mut b, f.model(), &base)
        }
        (Problem::Finite(_), m) => bail!(
            "`{}` needs a discounted problem; this problem is finite-horizon",
            m.name()
        ),
        (Problem::Discounted(mdp), Method::Exact) => discounted_exact(&mut b, mdp),
        (Problem::Discounted(mdp), Method::Pi) => discounted_pi(&mut b, mdp),
        (Problem::Discounted(mdp), Method::Compare) => discounted_compare(&mut b, mdp),
        (Problem::Discounted(mdp), Method::CheckAbao) => check_abao(&mut b, mdp),
        (Problem::Discounted(_), Method::Rollout) => {
            bail!("`rollout` needs a finite-horizon problem; this problem is discounted")
        }
    }?;
    Ok(b.report)
}

/// States reported on: the initial state if the model has one, otherwise
/// every stage-0 state.
fn designated<M: FiniteHorizonModel + ?Sized>(model: &M) -> Vec<usize> {
    match model.initial_state() {
        Some(x) => vec![x],
        None => (0..model.state_count(0)).collect(),
    }
}

fn finite_base(
    f: &crate::problem::FiniteProblem,
    config: &ExperimentConfig,
) -> Result<FactoredPolicy> {
    let model = f.model();
    let policy = match (&config.policy, f.greedy_base()) {
        (Some(u), _) => {
            let u = FactoredControl::new(u.clone());
            FactoredPolicy::from_fn(model, |_, _| u.clone())
        }
        (None, Some(greedy)) => greedy,
        (None, None) => FactoredPolicy::from_fn(model, |k, x| {
            FactoredControl::new(
                (0..model.agent_count())
                    .map(|a| model.control_set(k, x, a)[0])
                    .collect(),
            )
        }),
    };
    policy.check_feasible(model).context("base policy")?;
    Ok(policy)
}

fn finite_exact(b: &mut Builder, model: &dyn FiniteHorizonModel) -> Result<()> {
    let (values, policy) = backward_induction(model)?;
    for x in designated(model) {
        b.row("exact", model.state_label(0, x), values.at(0, x), 0, 0);
        if model.horizon() > 0 {
            b.report.notes.push(format!(
                "optimal first control at {}: {}",
                model.state_label(0, x),
                policy.control(0, x)
            ));
        }
    }
    Ok(())
}

fn variant_of(arg: VariantArg) -> Result<Variant> {
    Ok(match arg {
        VariantArg::Standard => Variant::Standard,
        VariantArg::Multiagent => Variant::Multiagent,
        VariantArg::Uncoordinated => Variant::Uncoordinated,
        VariantArg::AgentByAgent => bail!("`agent-by-agent` is a policy-iteration variant; rollout takes standard, multiagent or uncoordinated"),
    })
}

fn finite_rollout(
    b: &mut Builder,
    model: &dyn FiniteHorizonModel,
    base: &FactoredPolicy,
) -> Result<()> {
    let config = b.config;
    let order = agent_order(config, model.agent_count())?;
    let variants = match config.method {
        Method::Compare => vec![
            Variant::Standard,
            Variant::Multiagent,
            Variant::Uncoordinated,
        ],
        _ => vec![variant_of(
            config.variant.unwrap_or(VariantArg::Multiagent),
        )?],
    };
    let evaluator = match config.trajectories {
        Some(n) => {
            let mut mc = MonteCarlo::new(n, config.seed);
            mc.truncation = config.truncate;
            QEvaluator::MonteCarlo(mc)
        }
        None => {
            if config.truncate.is_some() {
                bail!("--truncate applies to Monte Carlo rollout; give --trajectories too");
            }
            QEvaluator::Exact
        }
    };
    b.echo("order", &order);
    b.echo(
        "variants",
        variants
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    match &evaluator {
        QEvaluator::Exact => b.echo("evaluator", "exact"),
        QEvaluator::MonteCarlo(mc) => {
            b.echo("evaluator", "monte-carlo");
            b.echo("trajectories", mc.trajectories);
            b.echo(
                "truncate",
                mc.truncation
                    .map_or_else(|| "none".to_string(), |t| t.to_string()),
            );
            b.echo("episodes", config.episodes);
        }
    }
    let states = designated(model);
    let base_values = evaluate_policy_finite(model, base)?;
    for &x in &states {
        b.row("base", model.state_label(0, x), base_values.at(0, x), 0, 0);
    }
    for variant in variants {
        let rollout_config = RolloutConfig::new(variant)
            .with_order(order.clone())
            .with_evaluator(evaluator.clone());
        let rollout = Rollout::new(model, base, rollout_config)?;
        let method = format!("rollout-{variant}");
        match &evaluator {
            QEvaluator::Exact => {
                let table = rollout.policy_table()?;
                let values = evaluate_policy_finite(model, &table)?;
                for &x in &states {
                    b.row(
                        &method,
                        model.state_label(0, x),
                        values.at(0, x),
                        rollout.evaluations(),
                        0,
                    );
                    if model.horizon() > 0 {
                        b.report.notes.push(format!(
                            "{method} first control at {}: {}",
                            model.state_label(0, x),
                            table.control(0, x)
                        ));
                    }
                }
            }
            QEvaluator::MonteCarlo(_) => {
                if config.episodes == 0 {
                    bail!("--episodes must be positive");
                }
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                for &x in &states {
                    let before = rollout.evaluations();
                    let mut total = 0.0;
                    for _ in 0..config.episodes {
                        total += rollout.run_episode(x, &mut rng)?.total_cost;
                    }
                    b.row(
                        &method,
                        model.state_label(0, x),
                        total / config.episodes as f64,
                        rollout.evaluations() - before,
                        0,
                    );
                }
            }
        }
    }
    if config.method == Method::Compare && matches!(evaluator, QEvaluator::Exact) {
        let (optimal, _) = backward_induction(model)?;
        for &x in &states {
            b.row("optimal", model.state_label(0, x), optimal.at(0, x), 0, 0);
        }
    }
    Ok(())
}

fn initial_policy(mdp: &DiscountedMdp, config: &ExperimentConfig) -> Result<StationaryPolicy> {
    let mu = match &config.policy {
        Some(u) => StationaryPolicy::uniform(mdp.state_count(), FactoredControl::new(u.clone())),
        None => StationaryPolicy::from_fn(mdp.state_count(), |x| {
            FactoredControl::new(
                (0..mdp.agent_count())
                    .map(|a| mdp.control_set(x, a)[0])
                    .collect(),
            )
        }),
    };
    mu.check_feasible(mdp).context("initial policy")?;
    Ok(mu)
}

fn discounted_exact(b: &mut Builder, mdp: &DiscountedMdp) -> Result<()> {
    b.echo("tolerance", 1e-10);
    let j = value_iteration(mdp, 1e-10)?;
    for (x, v) in j.iter().enumerate() {
        b.row("exact", mdp.state_name(x), *v, 0, 0);
    }
    let greedy = agentwise::dp::greedy_policy(mdp, &j)?;
    b.report.notes.push(format!("optimal policy: {greedy}"));
    Ok(())
}

fn sup_decrease(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn pi_rows(b: &mut Builder, mdp: &DiscountedMdp, name: &str, trace: &PiTrace, per_iteration: bool) {
    if per_iteration {
        for (i, it) in trace.iterates.iter().enumerate() {
            let decrease = match i {
                0 => 0.0,
                _ => sup_decrease(&trace.iterates[i - 1].value, &it.value),
            };
            b.row(
                &format!("{name}/iteration"),
                "sup-decrease".into(),
                decrease,
                it.q_evaluations,
                it.iteration,
            );
        }
    }
    for x in 0..mdp.state_count() {
        b.row(
            name,
            mdp.state_name(x),
            trace.final_value()[x],
            trace.total_q_evaluations(),
            trace.iterations(),
        );
    }
    let status = if trace.converged() {
        "converged"
    } else {
        "stopped at the iteration cap"
    };
    b.report.notes.push(format!(
        "{name} {status} after {} improvement steps: {}",
        trace.iterations(),
        trace.final_policy()
    ));
}

fn discounted_pi(b: &mut Builder, mdp: &DiscountedMdp) -> Result<()> {
    let config = b.config;
    let mu0 = initial_policy(mdp, config)?;
    b.echo("initial policy", &mu0);
    let variant = config.variant.unwrap_or(VariantArg::AgentByAgent);
    let trace = match variant {
        VariantArg::Standard => standard_pi(mdp, &mu0, config.iteration_cap)?,
        VariantArg::AgentByAgent | VariantArg::Multiagent => {
            let order = agent_order(config, mdp.agent_count())?;
            b.echo("order", &order);
            agent_by_agent_pi(mdp, &mu0, &order, config.iteration_cap)?
        }
        VariantArg::Uncoordinated => {
            bail!("policy iteration takes --variant standard or agent-by-agent")
        }
    };
    let name = match variant {
        VariantArg::Standard => "pi-standard",
        _ => "pi-agent-by-agent",
    };
    pi_rows(b, mdp, name, &trace, true);
    Ok(())
}

fn discounted_compare(b: &mut Builder, mdp: &DiscountedMdp) -> Result<()> {
    let config = b.config;
    let mu0 = initial_policy(mdp, config)?;
    let order = agent_order(config, mdp.agent_count())?;
    b.echo("initial policy", &mu0);
    b.echo("order", &order);
    let j = value_iteration(mdp, 1e-10)?;
    for (x, v) in j.iter().enumerate() {
        b.row("exact", mdp.state_name(x), *v, 0, 0);
    }
    let standard = standard_pi(mdp, &mu0, config.iteration_cap)?;
    pi_rows(b, mdp, "pi-standard", &standard, false);
    let agentwise = agent_by_agent_pi(mdp, &mu0, &order, config.iteration_cap)?;
    pi_rows(b, mdp, "pi-agent-by-agent", &agentwise, false);
    Ok(())
}

fn check_abao(b: &mut Builder, mdp: &DiscountedMdp) -> Result<()> {
    let mu = initial_policy(mdp, b.config)?;
    b.echo("policy", &mu);
    let report = is_agent_by_agent_optimal(mdp, &mu)?;
    let j = evaluate_policy_discounted(mdp, &mu)?;
    for (x, v) in j.iter().enumerate() {
        let checked: u64 = mdp.control_sets(x).iter().map(|s| s.len() as u64).sum();
        b.row("check-abao", mdp.state_name(x), *v, checked, 0);
    }
    for v in &report.violations {
        b.row(
            "check-abao/violation",
            format!(
                "{} agent {} -> {}",
                mdp.state_name(v.state),
                v.agent + 1,
                v.better_label
            ),
            v.better_q,
            0,
            0,
        );
        b.report.notes.push(format!(
            "violation at {}: agent {} switching to {} gives {} < {}",
            mdp.state_name(v.state),
            v.agent + 1,
            v.better_label,
            v.better_q,
            v.current_q
        ));
    }
    b.report.notes.push(format!(
        "agent-by-agent optimal: {}",
        if report.is_optimal() { "yes" } else { "no" }
    ));
    Ok(())
}
