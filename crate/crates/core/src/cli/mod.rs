//! Command-line front end: `synth`, `train`, `eval`, `adapt` and `graph`.
//!
//! Settings resolve as command-line flag, then (for the output directory)
//! the `HRC_PREDICT_OUT_DIR` environment variable, then the `--config`
//! file, then the built-in default. Exit codes: 0 success, 1 invalid input
//! or domain error, 2 I/O failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ConfigFile, KNOWN_KEYS};

pub const OUT_DIR_ENV: &str = "HRC_PREDICT_OUT_DIR";
pub const VERSION: &str = concat!("hrc-predict ", env!("CARGO_PKG_VERSION"));

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";

#[derive(Debug, Parser)]
#[command(name = "hrc-predict", version, about = "Wrist trajectory and intent prediction with online adaptation")]
pub struct Cli {
    /// Flat `key = value` settings file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for generated files and reports
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-subject dataset and its split manifest
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus loss log
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split
    Eval(EvalArgs),
    /// Replay a split as a stream with online adaptation
    Adapt(AdaptArgs),
    /// Parse a task graph and check a trace against it
    Graph(GraphArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Trials per action for the training subject A
    #[arg(long)]
    pub trials_a: Option<usize>,
    /// Trials per action for the held-out subject B
    #[arg(long)]
    pub trials_b: Option<usize>,
    /// `holdout:<subject>[:<fraction>]` or `ratio:<train>:<val>:<test>`
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding trajectories.csv and manifest.json (default: out dir)
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Kalman-smooth trajectories before windowing
    #[arg(long)]
    pub smoothing: Option<bool>,
    #[arg(long)]
    pub process_std: Option<f64>,
    #[arg(long)]
    pub measurement_std: Option<f64>,
    /// Window stride in frames
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// multi, intent or traj
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Attention score: general or cosine
    #[arg(long)]
    pub score: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Classification weight in the joint loss
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Early-stopping patience in epochs; 0 disables
    #[arg(long)]
    pub patience: Option<usize>,
    /// Gradient norm cap; 0 disables
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub teacher_forcing: Option<bool>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint to evaluate (default: <out dir>/model.ckpt)
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// train, val or test
    #[arg(long)]
    pub eval_split: Option<String>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Split replayed as the stream
    #[arg(long)]
    pub eval_split: Option<String>,
    /// Comma-separated stacking depths, e.g. `1,2,5`
    #[arg(long)]
    pub k: Option<String>,
    /// Comma-separated parameter groups to adapt
    #[arg(long)]
    pub subset: Option<String>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Graph file (default: bundled card-making graph)
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Comma-separated action ids
    #[arg(long, conflicts_with = "trace_file")]
    pub trace: Option<String>,
    /// File holding the trace, ids separated by commas or whitespace
    #[arg(long, value_name = "FILE")]
    pub trace_file: Option<PathBuf>,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> crate::Result<()> {
    commands::dispatch(cli)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}
