//! `dxml` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
//! Logs go to stderr; data goes to stdout or the `--out` path.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::predictor::Weighting;

pub use commands::{
    cmd_embed_labels, cmd_evaluate, cmd_predict, cmd_sweep_k, cmd_train, load_data, read_predictions, sweep_k, write_atomic,
    SweepResult,
};
pub use config::{apply_setting, parse_config_text, ConfigArgs, CONFIG_KEYS};

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dxml", version, about = "Deep label-embedding extreme multi-label classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it to a model file.
    Train(TrainArgs),
    /// Predict label scores for every point of a data file.
    Predict(PredictArgs),
    /// Score a predictions file against a labeled data file.
    Evaluate(EvaluateArgs),
    /// Pick the neighbor count k on a validation file.
    SweepK(SweepArgs),
    /// Build the label graph and export the label embedding as text.
    EmbedLabels(EmbedArgs),
}

/// Row selection from a split file (whitespace-separated columns of 1-based ids).
#[derive(Debug, Clone, Default, Args)]
pub struct SplitArgs {
    /// Use only the rows listed in this split file.
    #[arg(long, value_name = "FILE")]
    pub split: Option<PathBuf>,
    /// Column of the split file to read (0-based).
    #[arg(long, default_value_t = 0)]
    pub split_column: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training data in sparse repository format.
    pub train_file: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Model file to write.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Worker threads (1 gives bit-reproducible runs).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Edge list ("i j [w]" per line) used instead of the co-occurrence graph.
    #[arg(long, value_name = "FILE")]
    pub prior_graph: Option<PathBuf>,
    /// Print the resolved configuration and stage plan, then stop.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    pub model: PathBuf,
    pub test_file: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Nearest neighbors per query.
    #[arg(short, default_value_t = 10)]
    pub k: usize,
    /// Labels written per point.
    #[arg(short, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value = "uniform", value_name = "uniform|inverse_distance|count")]
    pub weighting: Weighting,
    /// Write every scored label instead of the top p.
    #[arg(long)]
    pub all_scores: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Table,
    Kv,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Predictions file, one `label:score` line per test point.
    pub predictions: PathBuf,
    pub test_file: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Cutoffs to report.
    #[arg(short, long = "k", value_delimiter = ',', default_value = "1,3,5")]
    pub ks: Vec<usize>,
    /// Leave unlabeled test points out of the averages.
    #[arg(long)]
    pub skip_unlabeled: bool,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    pub model: PathBuf,
    pub validation_file: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Candidate neighbor counts.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub candidates: Vec<usize>,
    /// Metric cutoffs.
    #[arg(long = "metric-k", value_delimiter = ',', default_value = "1,3,5")]
    pub metric_ks: Vec<usize>,
    #[arg(long, default_value = "uniform")]
    pub weighting: Weighting,
    #[arg(long)]
    pub skip_unlabeled: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    pub train_file: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_name = "FILE")]
    pub prior_graph: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// writing data output to `stdout` unless the command has `--out`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(stdout, "{e}").map_err(|e| CliError::Internal(e.to_string()))?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    match cli.command {
        Command::Train(a) => cmd_train(&a, stdout),
        Command::Predict(a) => cmd_predict(&a, stdout),
        Command::Evaluate(a) => cmd_evaluate(&a, stdout),
        Command::SweepK(a) => cmd_sweep_k(&a, stdout),
        Command::EmbedLabels(a) => cmd_embed_labels(&a, stdout),
    }
}

/// Binary entry point; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(std::env::args_os(), &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            match &e {
                CliError::Usage(msg) if msg.starts_with("error:") => eprint!("{msg}"),
                _ => eprintln!("dxml: {e}"),
            }
            e.exit_code()
        }
    }
}
