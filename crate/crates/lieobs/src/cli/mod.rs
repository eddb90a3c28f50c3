//! Command-line interface: `generate | train | evaluate | sweep | gradcheck`.
//!
//! Configuration is layered: built-in defaults, then an optional
//! `--preset`, then the optional TOML config file (`--config` or the
//! `LIEOBS_CONFIG` environment variable), then command-line flags. Every
//! resolved value carries its provenance and is echoed before any work
//! starts, so a run can be reproduced from its log alone.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime or
//! numeric error.

mod commands;
mod config;

pub use config::{
    EvaluateOptions, GenerateOptions, GradcheckOptions, Preset, Source, SweepOptions,
    TrainOptions,
};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::Result;

/// Environment variable holding the default config-file path.
pub const CONFIG_ENV_VAR: &str = "LIEOBS_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "lieobs",
    version,
    about = "Manifold-constrained learned observer for rigid-body state estimation"
)]
struct Cli {
    /// TOML configuration file; flags override file values. Defaults to
    /// $LIEOBS_CONFIG when set.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for generation, training and evaluation. Results are
    /// bitwise-reproducible regardless of the count; 1 forces fully serial
    /// execution.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/val/test splits and inference sets into a directory.
    Generate(GenerateArgs),
    /// Train the observer on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one inference set of a dataset.
    Evaluate(EvaluateArgs),
    /// Evaluate a checkpoint across noise levels on fresh sequences.
    Sweep(SweepArgs),
    /// Check rollout gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub(crate) struct GenerateArgs {
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Scale preset: desk (N=2000, M=50) or paper (N=20000, M=100).
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Number of noiseless sequences (split 80/10/10 by default).
    #[arg(long)]
    n: Option<usize>,
    /// Epochs per sequence.
    #[arg(long)]
    m: Option<usize>,
    /// Epoch length in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated noise levels for the inference sets.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sigmas: Option<Vec<f64>>,
    /// Sequences per inference set.
    #[arg(long)]
    infer_count: Option<usize>,
    /// Epochs per inference sequence.
    #[arg(long)]
    infer_length: Option<usize>,
}

#[derive(Debug, Args)]
pub(crate) struct TrainArgs {
    /// Dataset directory produced by `generate`.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Output directory for checkpoints and the history file.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Scale preset: desk (H=64) or paper (H=512).
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// GRU hidden size.
    #[arg(long)]
    hidden: Option<usize>,
    /// AdamW learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// AdamW decoupled weight decay.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Sequences per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Passes over the training set (one validation per pass).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Global gradient-norm clip.
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Seed for initialization and batch shuffling.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub(crate) struct EvaluateArgs {
    /// Dataset directory holding the inference sets.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Report output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Which inference set to use (by its noise level).
    #[arg(long)]
    sigma: Option<f64>,
    /// Rollout epochs excluded from the statistics.
    #[arg(long)]
    skip: Option<usize>,
}

#[derive(Debug, Args)]
pub(crate) struct SweepArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Report output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sigmas: Option<Vec<f64>>,
    /// Fresh sequences per noise level.
    #[arg(long)]
    count: Option<usize>,
    /// Epochs per sequence.
    #[arg(long)]
    length: Option<usize>,
    /// Epoch length in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Seed for the fresh inference sequences.
    #[arg(long)]
    seed: Option<u64>,
    /// Rollout epochs excluded from the statistics.
    #[arg(long)]
    skip: Option<usize>,
}

#[derive(Debug, Args)]
pub(crate) struct GradcheckArgs {
    /// Hidden size of the checked network.
    #[arg(long)]
    h: Option<usize>,
    /// Sequence length of the checked rollout.
    #[arg(long)]
    m: Option<usize>,
    /// Seed for the test problem.
    #[arg(long)]
    seed: Option<u64>,
    /// Central-difference step.
    #[arg(long)]
    step: Option<f64>,
    /// Corrupt one analytic gradient entry; the check must then fail.
    #[arg(long, hide = true)]
    corrupt: bool,
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = config::load_file(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(args) => commands::generate(GenerateOptions::resolve(&file, &args)?),
        Command::Train(args) => commands::train(TrainOptions::resolve(&file, &args)?),
        Command::Evaluate(args) => commands::evaluate(EvaluateOptions::resolve(&file, &args)?),
        Command::Sweep(args) => commands::sweep(SweepOptions::resolve(&file, &args)?),
        Command::Gradcheck(args) => commands::gradcheck(GradcheckOptions::resolve(&file, &args)?),
    }
}

/// Entry point of the `lieobs` binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return 1;
        }
        Err(e) => {
            // --help / --version
            let _ = e.print();
            return 0;
        }
    };

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            return 2;
        }
    }

    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
