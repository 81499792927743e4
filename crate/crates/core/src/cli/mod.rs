//! Command-line front end. Exit codes: 0 success, 2 bad input, 3 runtime
//! failure (including training divergence).

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;

use crate::baselines::BaselineKind;
use crate::corpus::CorpusError;
use crate::model::ModelError;
use crate::pipeline::PipelineError;

pub use config::{ExperimentConfig, GridSpec, ModelSettings, Paths, SegmentationSettings, VocabSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) | ModelError::Checkpoint(_) | ModelError::Io { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Model(m) => m.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "docnli", version, about = "Document-level NLI and evidence ranking for contracts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UndefinedF1Arg {
    Exclude,
    Zero,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a released dataset file into the canonical corpus format.
    Import {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Split a corpus into train/dev/test, stratified by document format.
    Split {
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the bundled-style synthetic corpus.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = crate::synthetic::BUNDLED_DOCUMENTS)]
        documents: usize,
        #[arg(long, default_value_t = crate::synthetic::BUNDLED_SEED)]
        seed: u64,
    },
    /// Print a complete experiment config (or grid file) with default values.
    InitConfig {
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
        /// Emit a grid file covering the base search space instead.
        #[arg(long)]
        grid: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Learn the subword vocabulary from the training corpus.
    BuildVocab {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Train a model; with --grid, sweep and rank runs by dev NLI accuracy.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Write the JSON-lines prediction dump for a corpus.
    Predict {
        #[arg(short, long)]
        config: PathBuf,
        /// Defaults to the training corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit a baseline on a training corpus and predict another.
    Baseline {
        #[arg(long, value_parser = parse_baseline)]
        kind: BaselineKind,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Encoder, vocabulary and training settings for the extractive baseline.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a prediction dump against a gold corpus.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = "system")]
        system: String,
        #[arg(long, value_enum, default_value_t = UndefinedF1Arg::Exclude)]
        undefined_f1: UndefinedF1Arg,
        /// Report JSON path; the text table always goes to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Dump the contexts of one document as JSON lines.
    InspectContexts {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        doc_id: String,
        /// Attach teacher labels for this hypothesis.
        #[arg(long)]
        hypothesis: Option<u32>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

fn parse_baseline(s: &str) -> Result<BaselineKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        "expected one of: majority, doc-tfidf-svm, span-tfidf-cosine, span-tfidf-svm, squad, random".to_string()
    })
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e}");
            e.exit_code()
        }
    }
}
