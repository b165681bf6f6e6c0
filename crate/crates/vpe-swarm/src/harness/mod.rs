//! Experiment runner behind the `vpe` binary: subcommand dispatch, config
//! loading, and exit-code mapping (0 success, 2 config error, 3 numerical
//! failure, 4 fragmentation).

pub mod commands;
pub mod config;

use crate::error::Error;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "vpe",
    about = "Virtual-particle-exchange swarm localization experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one localization (or an error sweep when [sweep] is configured).
    Localize(CommonArgs),
    /// Convergence-iteration sweep across size factors and ranges.
    Sweep(CommonArgs),
    /// Compare sensed runs with calibration on and off under biased sensors.
    CalibrateStudy(CommonArgs),
    /// Shape-formation loop with trajectory, snapshots and similarity curve.
    Formation(CommonArgs),
    /// Run to convergence and compare against the spectral oracle.
    OracleCheck(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: from config, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the algorithm variant: matrix | optical.
    #[arg(long)]
    variant: Option<String>,
    /// Allow long-running sizes (e.g. size factor 100).
    #[arg(long)]
    long: bool,
}

fn build_context(args: &CommonArgs) -> crate::Result<commands::CommandContext> {
    let mut loaded = config::load_config(&args.config)?;
    if let Some(seed) = args.seed {
        loaded.config.scenario.seed = seed;
    }
    if let Some(variant) = &args.variant {
        loaded.config.variant = variant
            .parse()
            .map_err(Error::InvalidParameter)?;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| loaded.config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(commands::CommandContext {
        loaded,
        out_dir,
        long: args.long,
    })
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::InvalidParameter(_) | Error::Parse { .. } | Error::Io(_) => 2,
        Error::SwarmFragmented { .. } => 4,
        _ => 3,
    }
}

/// CLI entry point used by the thin binary.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let (args, runner): (&CommonArgs, fn(&commands::CommandContext) -> crate::Result<()>) =
        match &cli.command {
            Command::Localize(a) => (a, commands::cmd_localize),
            Command::Sweep(a) => (a, commands::cmd_sweep_complexity),
            Command::CalibrateStudy(a) => (a, commands::cmd_calibration_study),
            Command::Formation(a) => (a, commands::cmd_formation),
            Command::OracleCheck(a) => (a, commands::cmd_oracle_check),
        };
    let ctx = match build_context(args) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match runner(&ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
