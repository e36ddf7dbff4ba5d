use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

/// One result line. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub state: String,
    pub value: f64,
    pub q_evals: u64,
    pub iterations: usize,
    pub seed: u64,
}

/// Results of one command. Contains nothing time-dependent, so identical
/// inputs give identical bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub command: String,
    pub problem: String,
    pub seed: u64,
    /// Effective configuration, echoed as `key = value`.
    pub config: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
    /// Policy summaries and checker findings.
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Human,
}

pub fn write_report<W: Write>(report: &ExperimentReport, format: Format, out: W) -> io::Result<()> {
    match format {
        Format::Csv => write_csv(report, out),
        Format::Human => write_human(report, out),
    }
}

fn write_csv<W: Write>(report: &ExperimentReport, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &report.rows {
        w.serialize(row)?;
    }
    if report.rows.is_empty() {
        w.write_record(["method", "state", "value", "q_evals", "iterations", "seed"])?;
    }
    w.flush()
}

fn write_human<W: Write>(report: &ExperimentReport, mut out: W) -> io::Result<()> {
    writeln!(out, "command: {}", report.command)?;
    writeln!(out, "problem: {}", report.problem)?;
    writeln!(out, "seed: {}", report.seed)?;
    for (k, v) in &report.config {
        writeln!(out, "{k}: {v}")?;
    }
    writeln!(out)?;
    let header = ["method", "state", "value", "q_evals", "iterations"];
    let cells: Vec<[String; 5]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                r.state.clone(),
                r.value.to_string(),
                r.q_evals.to_string(),
                r.iterations.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..5)
        .map(|i| {
            cells
                .iter()
                .map(|c| c[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |out: &mut W, c: [&str; 5]| -> io::Result<()> {
        let text = format!(
            "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
            c[0],
            c[1],
            c[2],
            c[3],
            c[4],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3],
            w4 = widths[4]
        );
        writeln!(out, "{}", text.trim_end())
    };
    line(&mut out, header)?;
    for c in &cells {
        line(&mut out, [&c[0], &c[1], &c[2], &c[3], &c[4]])?;
    }
    if !report.notes.is_empty() {
        writeln!(out)?;
        for note in &report.notes {
            writeln!(out, "{note}")?;
        }
    }
    Ok(())
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit_report(
    report: &ExperimentReport,
    format: Format,
    path: Option<&Path>,
) -> io::Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write_report(report, format, &mut w)?;
            w.flush()
        }
        None => write_report(report, format, io::stdout().lock()),
    }
}
