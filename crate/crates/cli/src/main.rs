use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use agentwise_cli::{
    emit_report, parse_problem_file, run_experiment, ExperimentConfig, Format, Method, Overrides,
    VariantArg,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "agentwise",
    version,
    about = "Multiagent rollout and policy iteration experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal values by backward induction or value iteration.
    Exact(Args),
    /// Rollout from a base policy (finite horizon).
    Rollout(Args),
    /// Policy iteration (discounted).
    Pi(Args),
    /// Base policy against all rollout variants, or the PI variants against each other.
    Compare(Args),
    /// Checks a policy for agent-by-agent optimality (discounted).
    CheckAbao(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Problem file (TOML).
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Agent order as 1-based indices, e.g. `2,1`.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Monte Carlo trajectories per Q-factor; exact Q-factors when omitted.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Simulated stages per Monte Carlo trajectory.
    #[arg(long)]
    truncate: Option<usize>,
    /// Discount factor, overriding the problem file.
    #[arg(long)]
    alpha: Option<f64>,
    /// Horizon, overriding the problem file.
    #[arg(long)]
    horizon: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Joint control used at every state as base or initial policy, e.g. `1,0`.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<usize>>,
    /// Episodes simulated per state with Monte Carlo rollout.
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    #[arg(long, default_value_t = agentwise::pi::DEFAULT_ITERATION_CAP)]
    max_iterations: usize,
}

fn run(method: Method, args: Args) -> anyhow::Result<()> {
    let start = Instant::now();
    let overrides = Overrides {
        alpha: args.alpha,
        horizon: args.horizon,
    };
    let problem = parse_problem_file(&args.problem, &overrides)?;
    let order = match args.order {
        Some(o) => Some(
            o.into_iter()
                .map(|a| {
                    a.checked_sub(1)
                        .ok_or_else(|| anyhow::anyhow!("--order is 1-based"))
                })
                .collect::<anyhow::Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let config = ExperimentConfig {
        method,
        seed: args.seed,
        order,
        variant: args.variant,
        trajectories: args.trajectories,
        truncate: args.truncate,
        episodes: args.episodes,
        policy: args.policy,
        iteration_cap: args.max_iterations,
    };
    let report = run_experiment(&problem, &config)?;
    emit_report(&report, args.format, args.out.as_deref())?;
    eprintln!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (method, args) = match cli.command {
        Command::Exact(a) => (Method::Exact, a),
        Command::Rollout(a) => (Method::Rollout, a),
        Command::Pi(a) => (Method::Pi, a),
        Command::Compare(a) => (Method::Compare, a),
        Command::CheckAbao(a) => (Method::CheckAbao, a),
    };
    match run(method, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
