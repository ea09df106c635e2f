//! `ccar3`: simulate canonical-pair data, fit and cross-validate the
//! estimators, and run seeded benchmarks.
//!
//! Exit codes: 0 success, 2 usage, 3 rank deficiency, 4 empty model,
//! 5 cross-validation failure, 1 anything else.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use ccar3::Execution;
use clap::{Parser, Subcommand};

use crate::config::{BenchArgs, CvArgs, FitArgs, SimulateArgs};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "ccar3", version, about = "Canonical correlation analysis via reduced-rank regression")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "CCAR3_THREADS")]
    jobs: Option<usize>,

    /// Print a JSON summary on stdout.
    #[arg(long, global = true)]
    json: bool,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic data set with known canonical directions.
    Simulate {
        /// JSON file with default values for the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: SimulateArgs,
    },
    /// Fit one estimator at a fixed penalty level.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: FitArgs,
    },
    /// Select the penalty by k-fold cross-validation and refit.
    Cv {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: CvArgs,
    },
    /// Run a regimes x methods x replicates benchmark spec.
    Benchmark {
        /// Benchmark spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: BenchArgs,
    },
}

fn execution(jobs: usize) -> Result<Execution, CliError> {
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be positive".into()));
    }
    if jobs == 1 {
        return Ok(Execution::Sequential);
    }
    // A second initialization (tests calling in-process) keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    Ok(Execution::Parallel)
}

fn run(cli: Cli) -> Result<commands::Report, CliError> {
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let exec = execution(jobs)?;
    match cli.command {
        Command::Simulate { config, args } => commands::simulate(args, config.as_ref()),
        Command::Fit { config, args } => commands::fit(args, config.as_ref()),
        Command::Cv { config, args } => commands::cv(args, config.as_ref(), exec),
        Command::Benchmark { spec, out, overrides } => commands::benchmark(&spec, &out, &overrides, exec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    let json = cli.json;
    match run(cli) {
        Ok(report) => {
            if json {
                match serde_json::to_string(&report) {
                    Ok(s) => println!("{s}"),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
