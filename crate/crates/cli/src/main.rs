use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conjgamma_cli::config::{Overrides, RunConfig};
use conjgamma_cli::{cmd_run, cmd_show, cmd_tables, failure_summary, CliError, EXIT_CHECKS_FAILED, EXIT_PASS};

/// Tables, capacities and Monte Carlo experiments for the subordinate
/// Brownian motion with Laplace exponent λ/ln(1+λ) − 1.
#[derive(Parser, Debug)]
#[command(name = "conjgamma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build (or verify cached) tables for u, v, Λ, μ, j and g.
    Tables {
        #[command(flatten)]
        common: Common,
    },
    /// Run one experiment and write JSON, text and CSV reports.
    Run {
        /// asymptotics, capacity-scaling, exit-bound, krylov-safonov,
        /// harnack, hoelder, poisson-comparability or charfn-check
        name: String,
        #[command(flatten)]
        common: Common,
        /// Master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo sample count for this experiment.
        #[arg(long)]
        samples: Option<usize>,
        /// Time step of the path skeleton.
        #[arg(long)]
        dt: Option<f64>,
        /// Jump cutoff ε of the subordinator.
        #[arg(long)]
        eps: Option<f64>,
        /// Output directory for reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a JSON report as text.
    Show { report: PathBuf },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dimension d (at least 3).
    #[arg(long)]
    dim: Option<u32>,
    /// Laplace inversion accuracy for the tables.
    #[arg(long)]
    accuracy: Option<f64>,
    /// Directory for cached tables.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Worker threads (0 = all available CPUs).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Tables { common } => {
            let mut config = RunConfig::load(common.config.as_deref())?;
            config.apply(
                &Overrides {
                    dimension: common.dim,
                    accuracy: common.accuracy,
                    cache_dir: common.cache_dir,
                    ..Default::default()
                },
                None,
            )?;
            cmd_tables(&config, common.threads, &mut stdout)
        }
        Command::Run {
            name,
            common,
            seed,
            samples,
            dt,
            eps,
            out,
        } => {
            let mut config = RunConfig::load(common.config.as_deref())?;
            config.apply(
                &Overrides {
                    dimension: common.dim,
                    seed,
                    samples,
                    dt,
                    eps,
                    accuracy: common.accuracy,
                    out_dir: out,
                    cache_dir: common.cache_dir,
                },
                Some(&name),
            )?;
            let result = cmd_run(&name, &config, common.threads)?;
            use std::io::Write;
            write!(stdout, "{}", result.report.to_text())?;
            for f in &result.files {
                writeln!(stdout, "wrote {}", f.display())?;
            }
            if result.report.passed {
                Ok(EXIT_PASS)
            } else {
                eprint!("{}", failure_summary(&result.report));
                Ok(EXIT_CHECKS_FAILED)
            }
        }
        Command::Show { report } => cmd_show(&report, &mut stdout),
    }
}
