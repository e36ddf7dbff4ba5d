//! Experiment harness: problem files, experiment orchestration and reports.

pub mod experiment;
pub mod problem;
pub mod report;

pub use experiment::{run_experiment, ExperimentConfig, Method, VariantArg};
pub use problem::{
    parse_problem_file, parse_problem_str, to_problem_toml, LoadedProblem, Overrides, Problem,
};
pub use report::{emit_report, write_report, ExperimentReport, Format, ReportRow};
