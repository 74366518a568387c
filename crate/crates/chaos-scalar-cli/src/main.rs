//! Command-line harness for the chaos-scalar solver.
//!
//! Five studies, one per subcommand, each emitting CSV files plus a manifest
//! into the output directory. Exit codes: 0 = run completed and every checked
//! invariant held; 1 = a run failed or an invariant was breached; 2 = the
//! configuration (file or flags) was invalid.

mod config;
mod csvout;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{load_file, resolve, CliError, FileConfig};

#[derive(Parser)]
#[command(
    name = "chaos-scalar",
    version,
    about = "Wiener-chaos studies of passive scalar transport in a synthetic incompressible velocity field",
    subcommand_required = true
)]
struct Cli {
    #[command(subcommand)]
    study: Study,
    /// TOML config file; omit to run the documented defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides master_seed from the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides out_dir from the config.
    #[arg(long, global = true, value_name = "PATH")]
    out_dir: Option<PathBuf>,
    /// Worker threads; 1 runs fully serially. Default: one per logical CPU.
    #[arg(long, global = true, value_name = "INT")]
    workers: Option<usize>,
    /// Suppress progress lines; errors still go to stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Study {
    /// Emit the velocity mode table and check the covariance identities.
    ValidateBasis,
    /// Solve the chaos coefficient system; dump coefficients and level moments.
    Propagate,
    /// Emit the truncated energy balance ledger and check its residual.
    Energy,
    /// Cross-validate the chaos solution against Euler-Maruyama Monte Carlo.
    CompareMc,
    /// Tabulate dt, truncation-order, time-basis, and shell refinements.
    Convergence,
}

impl Study {
    fn name(&self) -> &'static str {
        match self {
            Study::ValidateBasis => "validate-basis",
            Study::Propagate => "propagate",
            Study::Energy => "energy",
            Study::CompareMc => "compare-mc",
            Study::Convergence => "convergence",
        }
    }
}

fn real_main(cli: &Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Failure(format!("cannot configure the worker pool: {e}")))?;
    }
    let file = match &cli.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let cfg = resolve(file, cli.seed, cli.out_dir.as_deref())?;
    run::dispatch(cli.study.name(), &cfg, cli.quiet)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
