//! Batch front end for the sensitivity-limit library: closed-form bounds,
//! Monte-Carlo estimator benchmarks, and one-axis sweeps, all driven by a
//! TOML run configuration and emitted as CSV.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::Overrides;

#[derive(Parser)]
#[command(name = "shotlimit", version, about = "Parameter-sensitivity limits of optical imaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form sensitivity scales, Fisher information, and CRBs.
    Bounds(CommonArgs),
    /// Monte-Carlo estimator benchmark against the bounds.
    Simulate(CommonArgs),
    /// Bounds (and optionally Monte Carlo) along one swept axis.
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the Monte-Carlo seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output path prefix.
    #[arg(long, value_name = "PREFIX")]
    out: Option<String>,
    /// Caps the worker thread count (default: one per core).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

fn run(args: &CommonArgs, cmd: fn(&config::RunConfig) -> Result<(), CliError>) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        // Ignored if a global pool already exists; per-process setting.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
    };
    let run = config::load(&args.config, &overrides).map_err(CliError::Config)?;
    cmd(&run)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bounds(args) => run(args, commands::cmd_bounds),
        Command::Simulate(args) => run(args, commands::cmd_simulate),
        Command::Sweep(args) => run(args, commands::cmd_sweep),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
