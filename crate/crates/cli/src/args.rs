use std::path::PathBuf;

use biconvmf::factorize::ModelKind;
use clap::{Args, Parser, Subcommand};

/// BiConvMF, ConvMF and PMF rating prediction from review text.
#[derive(Debug, Parser)]
#[command(name = "biconvmf", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Base seed, overriding `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Clip predictions to the 1..5 rating scale.
    #[arg(long, global = true)]
    pub clip: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse reviews, split them and write the corpus bundle.
    Ingest {
        /// JSON-lines review file, optionally gzipped.
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// Keep only the first N valid records.
        #[arg(long, value_name = "N")]
        first_n: Option<usize>,
    },
    /// Train one model on the bundle's training split.
    Train {
        #[arg(long)]
        model: ModelKind,
    },
    /// Score a trained checkpoint on the held-out ratings.
    Evaluate {
        #[arg(long)]
        model: ModelKind,
    },
    /// Repeated runs of several models on one split.
    Compare {
        /// Models to compare (repeatable); defaults to `experiment.models`.
        #[arg(long)]
        model: Vec<ModelKind>,
        /// Number of runs per model.
        #[arg(long)]
        runs: Option<usize>,
        /// Concurrent runs; the report does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
}
