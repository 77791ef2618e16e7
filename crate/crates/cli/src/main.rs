//! `sparse-time`: decompose, train, predict, ablate, and benchmark the
//! decomposition-based forecaster from a single TOML run configuration.
//!
//! Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "sparse-time", version, about = "Saliency/memory/trend decomposition forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Seed override; mandatory for train and ablate
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write component traces for the configured series
    Decompose(CommonArgs),
    /// Train a model; write checkpoint, epoch log, and evaluation report
    Train(CommonArgs),
    /// Load a checkpoint and write test-split predictions
    Predict(PredictArgs),
    /// Train all seven component masks on shared data; write the grid
    Ablate(CommonArgs),
    /// Measure decomposition+forward wall time across sequence lengths
    Bench(CommonArgs),
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint path (default: `<out>/checkpoint.json`)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, checkpoint) = match &cli.command {
        Command::Decompose(a) | Command::Train(a) | Command::Ablate(a) | Command::Bench(a) => {
            (a, None)
        }
        Command::Predict(p) => (&p.common, p.checkpoint.clone()),
    };
    let cfg = RunConfig::load(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    match cli.command {
        Command::Decompose(ref a) => commands::cmd_decompose(&cfg, cfg.resolve_seed(a.seed), &out),
        Command::Train(ref a) => commands::cmd_train(&cfg, a.seed, &out),
        Command::Predict(ref p) => commands::cmd_predict(&cfg, p.common.seed, &out, checkpoint),
        Command::Ablate(ref a) => commands::cmd_ablate(&cfg, a.seed, &out),
        Command::Bench(ref a) => commands::cmd_bench(&cfg, cfg.resolve_seed(a.seed), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
