//! The `v1snn` command-line pipeline.
//!
//! Stages: `train` → `extract` → `fit` → `eval` / `sweep`, plus `export-rf`,
//! `aggregate`, `whiten` (natural-image conversion) and `pipeline`, which
//! chains everything for every configured seed.

pub mod commands;
pub mod export;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use v1snn::Error;

#[derive(Debug, Parser)]
#[command(name = "v1snn", version, about = "Spiking V1 model: natural-scene training and MNIST readout")]
pub struct Cli {
    /// TOML config; keys override the preset it names (default preset: desk).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for feature extraction (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network on natural-scene patches.
    Train {
        /// Continue from a checkpoint instead of a fresh network.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Extract MNIST activity vectors from a trained snapshot.
    Extract {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_parser = ["train", "test"])]
        split: String,
        /// Fraction of nonzero pixels erased before presentation.
        #[arg(long, default_value_t = 0.0)]
        level: f64,
        /// Presentations per patch (default: from config).
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long, default_value = "intact", value_parser = ["intact", "no-inhibition"])]
        variant: String,
        /// Also write the matrix as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Fit scaler and linear SVM on level-0 training features.
    Fit {
        #[arg(long)]
        features: PathBuf,
    },
    /// Accuracy of a model on a feature file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Accuracy over erasement levels on the test split.
    Sweep {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "intact", value_parser = ["intact", "no-inhibition"])]
        variant: String,
        /// Comma-separated levels (default: from config).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Write receptive fields (w_ON − w_OFF) as PGM images.
    ExportRf {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Average sweep CSVs from several runs.
    Aggregate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Convert photographs into a whitened NIMG store.
    Whiten {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Side of the square each image is cropped and resized to.
        #[arg(long, default_value_t = 512)]
        size: u32,
        /// Filter cutoff in cycles per image.
        #[arg(long, default_value_t = 200.0)]
        f0: f64,
    },
    /// Train, extract, fit and sweep (intact and no-inhibition) for every configured seed.
    Pipeline,
}

/// Process exit code for an error.
///
/// | code | meaning |
/// |------|---------|
/// | 0 | success |
/// | 2 | invalid config or arguments |
/// | 3 | missing, corrupt or inconsistent input data |
/// | 4 | numerical fault or dead network |
/// | 5 | classifier did not converge |
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        Error::Data { .. } | Error::Checksum { .. } | Error::Version { .. } | Error::Shape(_) | Error::Invalid(_) | Error::Io(_) => 3,
        Error::Numerical { .. } | Error::DeadNetwork { .. } => 4,
        Error::NonConvergence { .. } => 5,
    }
}
