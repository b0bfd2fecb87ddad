//! `triage`: one binary for the whole pipeline.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] triage_core::Error),
    #[error(transparent)]
    Load(#[from] triage_service::LoadError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "triage", version, about = "Referral triage over long clinical histories")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config (TOML); flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel scoring (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    #[value(name = "brute_force", alias = "brute-force")]
    BruteForce,
    #[value(name = "concat_512", alias = "concat-512")]
    Concat512,
    #[value(name = "concat_4096", alias = "concat-4096")]
    Concat4096,
    #[value(name = "segment_batch", alias = "segment-batch")]
    SegmentBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Eval,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pca,
    Tsne,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Gen {
        #[arg(long)]
        patients: Option<usize>,
        #[arg(long, value_parser = ["uniform", "head", "tail"])]
        signal_position: Option<String>,
        #[arg(long)]
        noise_ratio: Option<f64>,
        /// Output corpus file (one instance per line).
        #[arg(long)]
        out: PathBuf,
        /// Also write descriptive statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Train a tokenizer on the training split of a corpus.
    Tokenizer {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one strategy's model and write a checkpoint.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Segment size for segment_batch.
        #[arg(long, value_parser = ["128", "256", "512"])]
        chunk_size: Option<String>,
        /// Train rank-r adapters on query, key and value instead of all
        /// weights.
        #[arg(long)]
        lora_rank: Option<usize>,
        /// Checkpoint whose encoder initialises the new model.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics log (default: checkpoint path + ".log").
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score checkpoints on a split and print accuracy, macro and weighted metrics.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        /// One checkpoint per strategy; repeat the flag.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// A strategy name, or "all" for every given checkpoint.
        #[arg(long, default_value = "all")]
        strategy: String,
        #[arg(long, value_enum, default_value = "eval")]
        split: SplitArg,
        /// Write metrics and strata as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write metrics CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time inference per strategy: mean and SD per instance.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        /// Only time instances with at least this many documents.
        #[arg(long, default_value_t = 2)]
        min_documents: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explanation bundle for one instance (segment_batch checkpoint).
    Explain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        instance_id: String,
        /// Team whose attention to show (default: predicted).
        #[arg(long)]
        label: Option<String>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the population map over the training split.
    Map {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "pca")]
        method: MethodArg,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "TRIAGE_CORPUS")]
        corpus: PathBuf,
        #[arg(long, env = "TRIAGE_TOKENIZER")]
        tokenizer: PathBuf,
        #[arg(long = "checkpoint", env = "TRIAGE_CHECKPOINTS", value_delimiter = ',', required = true)]
        checkpoints: Vec<PathBuf>,
        /// Precomputed map from `triage map`.
        #[arg(long, env = "TRIAGE_MAP")]
        map: Option<PathBuf>,
        #[arg(long, env = "TRIAGE_ADDR", default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
