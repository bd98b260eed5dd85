//! Library half of the `conjgamma` command: configuration, the table cache
//! and the subcommands, kept separate from argument parsing so they can be
//! tested directly.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use conjgamma::exec::with_threads;
use conjgamma::experiments::{is_stochastic, run_experiment, Lab, EXPERIMENTS};
use conjgamma::report::ExperimentReport;
use conjgamma::Execution;

use crate::cache::ensure_tables;
use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] conjgamma::Error),

    #[error("configuration: {0}")]
    Config(String),

    #[error("dimension {d} rejected: {note}")]
    Dimension { d: u32, note: &'static str },

    #[error("unknown experiment '{0}'; expected one of: {list}", list = EXPERIMENTS.join(", "))]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Dimension { .. } | CliError::UnknownExperiment(_) => 2,
            _ => 3,
        }
    }
}

/// Exit code when every check passed.
pub const EXIT_PASS: i32 = 0;
/// Exit code when a report has failing checks.
pub const EXIT_CHECKS_FAILED: i32 = 1;

fn execution() -> Execution {
    Execution::Parallel
}

/// `tables`: builds or loads the cached tables and prints their checksums.
pub fn cmd_tables(config: &RunConfig, threads: usize, out: &mut impl Write) -> Result<i32, CliError> {
    let set = with_threads(threads, || ensure_tables(config, execution()))?;
    if set.cache_hit {
        writeln!(out, "cache hit: {}", set.dir.display())?;
    } else {
        writeln!(out, "built tables: {}", set.dir.display())?;
    }
    for (name, sum, n) in set.checksums() {
        writeln!(out, "  {name:<18} points={n:<6} sha256={sum}")?;
    }
    Ok(EXIT_PASS)
}

/// Result of [`cmd_run`]: the report and the files written.
pub struct RunOutput {
    pub report: ExperimentReport,
    pub files: Vec<PathBuf>,
}

/// `run <name>`: runs one experiment and writes its report files.
pub fn cmd_run(name: &str, config: &RunConfig, threads: usize) -> Result<RunOutput, CliError> {
    if !EXPERIMENTS.contains(&name) {
        return Err(CliError::UnknownExperiment(name.to_string()));
    }
    let report = with_threads(threads, || -> Result<ExperimentReport, CliError> {
        let exec = execution();
        let set = ensure_tables(config, exec)?;
        let lab = Lab::new(set.profiles, set.levy, set.green, exec)?;
        let mut report = run_experiment(name, &lab, &config.experiments, &config.mc, config.seed)?;
        report.config_hash = config.hash();
        report.param("run_config", config.hashed_view());
        if !is_stochastic(name) {
            report.seed = None;
        }
        Ok(report)
    })?;
    let files = report.write_all(&config.out_dir, name)?;
    Ok(RunOutput { report, files })
}

/// Per-check summary of failing checks.
pub fn failure_summary(report: &ExperimentReport) -> String {
    let mut s = format!("{}: FAIL\n", report.experiment);
    for c in report.checks.iter().filter(|c| !c.passed) {
        s.push_str(&format!(
            "  failed check '{}': observed {:.6e}, rule {}\n",
            c.name, c.observed, c.rule
        ));
    }
    s
}

/// `show <report>`: prints the text form of a JSON report.
pub fn cmd_show(path: &Path, out: &mut impl Write) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(path)?;
    let report = ExperimentReport::from_json(&text)?;
    write!(out, "{}", report.to_text())?;
    Ok(if report.passed { EXIT_PASS } else { EXIT_CHECKS_FAILED })
}
