//! Command-line pipeline: synthesize data, train, evaluate, benchmark,
//! ablate and predict.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use lanecast::data::{DataError, IndexKind, Scenario};
use lanecast::eval::EvalError;
use lanecast::model::{ModelError, Variant};
use lanecast::training::TrainError;
use thiserror::Error;

pub use commands::run;
pub use config::{resolve, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{} of {total} runs failed: {}", failures.len(), failures.join("; "))]
    Partial { failures: Vec<String>, total: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Partial { .. } => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite(_) => CliError::Numeric(e.to_string()),
            ModelError::InvalidConfig(_) | ModelError::UnknownVariant(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            TrainError::Diverged { .. } | TrainError::NonFiniteGradient => CliError::Numeric(e.to_string()),
            TrainError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lanecast", version, about = "Lane-level pavement performance prediction")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, env = "LANECAST_CONFIG")]
    pub config: Option<PathBuf>,
    /// Root seed for generation, splitting and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// 2lane, 3lane or 4lane.
    #[arg(long, global = true)]
    pub scenario: Option<Scenario>,
    /// pci, pqi or rqi.
    #[arg(long, global = true)]
    pub index: Option<IndexKind>,
    /// full, no_shared, no_heads or no_concat.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        /// Number of segments; the scenario default when omitted.
        #[arg(long)]
        segments: Option<usize>,
    },
    /// Train one model and score it on the held-out split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Keep only the first N training samples.
        #[arg(long)]
        max_samples: Option<usize>,
        /// `overfit`: 32 training samples for 2000 epochs.
        #[arg(long)]
        preset: Option<Preset>,
    },
    /// Score a trained checkpoint on the test split of its data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Compare the multi-task model with the lane-specific and mix baselines.
    Benchmark {
        /// Records to use instead of synthesizing each scenario.
        #[command(flatten)]
        data: OptionalDataArgs,
    },
    /// Structural and feature ablations of the multi-task model.
    Ablate {
        #[command(flatten)]
        data: OptionalDataArgs,
    },
    /// Predict next-year lane values for every unit in a records file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Records holding at least the latest series years of each segment.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct DataArgs {
    /// Records file in the comma-separated schema.
    #[arg(long)]
    pub data: PathBuf,
    /// Segment ids with recorded maintenance, one per line.
    #[arg(long)]
    pub maintained: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct OptionalDataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub maintained: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Overfit,
}
