//! `dsrm` command-line surface: synthetic data, feature extraction,
//! training, prediction, evaluation, fine-tuning, k-fold runs and dataset
//! statistics.

pub mod annotations;
pub mod commands;
pub mod config;
pub mod error;
pub mod image_io;
pub mod manifest;
pub mod pipeline;
pub mod synth;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dsrm_core::features::Backend;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, SplitSel};

#[derive(Debug, Parser)]
#[command(name = "dsrm", version, about = "Crowd counting by local-count regression over overlapping patches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every command accepts.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// `key = value` run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `features.backend` (tiny_cnn or precomputed).
    #[arg(long)]
    pub backend: Option<Backend>,
    /// Bilinearly upscale images smaller than one patch.
    #[arg(long)]
    pub upscale_small: bool,
    /// Drop zero-count images from MNAE instead of failing.
    #[arg(long)]
    pub mnae_skip_zero: bool,
}

impl Common {
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(b) = self.backend {
            cfg.backend = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn manifest(&self) -> CliResult<Manifest> {
        Manifest::load(self.manifest.as_deref().ok_or_else(|| CliError::input("--manifest is required"))?)
    }

    /// The output directory, created if needed.
    pub fn out_dir(&self) -> CliResult<&Path> {
        let out = self.out.as_deref().ok_or_else(|| CliError::input("--out is required"))?;
        std::fs::create_dir_all(out)
            .map_err(|e| CliError::input(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(out)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic crowd dataset with annotations and a manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 250)]
        images: usize,
        /// Trailing images placed in the test split.
        #[arg(long, default_value_t = 50)]
        test: usize,
        #[arg(long, default_value_t = 160)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        count_min: usize,
        #[arg(long, default_value_t = 100)]
        count_max: usize,
        #[arg(long, default_value_t = 2.0)]
        blob_sigma: f64,
        #[arg(long, default_value_t = 0.03)]
        noise: f64,
    },
    /// Write DSRF feature files and a manifest pointing at them.
    Extract {
        #[command(flatten)]
        common: Common,
    },
    /// Train on the manifest's train split (or every record).
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Predict counts (and optionally density maps).
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Predict one image instead of a manifest.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Also write 16-bit PGM density maps.
        #[arg(long)]
        density: bool,
        #[arg(long, value_enum, default_value_t = SplitSel::All)]
        split: SplitSel,
    },
    /// Score a predictions CSV against manifest annotations.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: PathBuf,
        /// Number of ascending-count groups (defaults to `eval.groups`).
        #[arg(long)]
        groups: Option<usize>,
        /// Histogram bins (defaults to `eval.bins`).
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, value_enum, default_value_t = SplitSel::All)]
        split: SplitSel,
    },
    /// Adapt a trained model's regressor to a target dataset.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// k-fold cross validation over every record.
    Kfold {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Dataset statistics and count histogram.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bins: Option<usize>,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    use commands::*;
    match cli.command {
        Command::Synth { common, images, test, size, count_min, count_max, blob_sigma, noise } => {
            let cfg = common.run_config()?;
            let spec =
                synth::SyntheticSpec { size, count_min, count_max, blob_sigma, noise, images, test, seed: cfg.seed };
            synth_cmd::run(&common, &spec)
        }
        Command::Extract { common } => extract::run(&common),
        Command::Train { common } => train::run(&common),
        Command::Predict { common, checkpoint, image, density, split } => {
            predict::run(&common, &checkpoint, image.as_deref(), density, split)
        }
        Command::Evaluate { common, predictions, groups, bins, split } => {
            evaluate::run(&common, &predictions, groups, bins, split)
        }
        Command::Finetune { common, checkpoint } => finetune::run(&common, &checkpoint),
        Command::Kfold { common, k } => kfold::run(&common, k),
        Command::Stats { common, bins } => stats::run(&common, bins),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::input(e.to_string()))?;
    run(cli)
}
