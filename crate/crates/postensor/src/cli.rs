//! Command line arguments and the TOML config file that mirrors them.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::formats;

/// Decomposition, approximation and completion of positive tensors.
#[derive(Debug, Parser)]
#[command(name = "postensor", version, about)]
pub struct Cli {
    /// Command to run.
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands; all share one set of flags.
#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Estimate a partition from observations and fit it.
    Complete(RunArgs),
    /// Exact decomposition of a dense tensor over given facets.
    Decompose(RunArgs),
    /// Fit a fixed structure (facets, or a CP model with --rank).
    Approximate(RunArgs),
    /// Median prediction error per method over seeded synthetic trials.
    Benchmark(RunArgs),
    /// Sample noisy observations from a ground truth.
    Synth(RunArgs),
    /// Evaluate a model at query indices.
    Predict(RunArgs),
}

impl Command {
    /// Name as typed on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Complete(_) => "complete",
            Self::Decompose(_) => "decompose",
            Self::Approximate(_) => "approximate",
            Self::Benchmark(_) => "benchmark",
            Self::Synth(_) => "synth",
            Self::Predict(_) => "predict",
        }
    }

    /// The flags.
    pub fn args(&self) -> &RunArgs {
        match self {
            Self::Complete(a)
            | Self::Decompose(a)
            | Self::Approximate(a)
            | Self::Benchmark(a)
            | Self::Synth(a)
            | Self::Predict(a) => a,
        }
    }
}

/// Flags shared by every subcommand. A config file given with `--config`
/// supplies the same keys; flags on the command line take precedence.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// TOML file with defaults for any of the other flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Observation or query CSV (`x1,…,xp[,y]`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Tensor dimensions, e.g. `3,3,3`; inferred from the data if absent.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Ground-truth tensor file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Facets as `1,2;3`, a JSON list, or a JSON file.
    #[arg(long)]
    pub facets: Option<String>,
    /// Bound `M` on the tensor entries.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub bound: Option<f64>,
    /// Solver accuracy.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Single risk-gap threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Threshold grid for cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub cv_grid: Option<Vec<f64>>,
    /// ℓ1 budget, or a grid of budgets when cross-validating.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// CP rank for ALS; the benchmark selects it by validation when absent.
    #[arg(long)]
    pub rank: Option<usize>,
    /// ALS sweeps.
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Sample sizes, e.g. `100,1000`.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Gamma noise `k,theta` with `k·theta = 1`, or `none`.
    #[arg(long)]
    pub noise: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Clamp measurements and predictions from below.
    #[arg(long)]
    pub floor: Option<f64>,
    /// Level-map sidecar for categorical index columns.
    #[arg(long)]
    pub levels: Option<PathBuf>,
    /// Model file for `predict`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($a:expr, $b:expr, $($f:ident),*) => {
        RunArgs { config: $a.config, $($f: $a.$f.or($b.$f)),* }
    };
}

impl RunArgs {
    /// Fills flags absent from the command line from the config file.
    pub fn resolve(self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = load_config(&path)?;
        Ok(merge_fields!(
            self, file, data, dims, truth, facets, bound, epsilon, threshold, cv_grid, lambda, rank, sweeps, seed,
            trials, n, noise, out, floor, levels, model
        ))
    }

    /// Output directory, `out` by default.
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Path of a required flag.
    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str, command: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{} requires --{}", command, flag)))
    }
}

/// Reads a config file.
pub fn load_config(path: &Path) -> Result<RunArgs> {
    let text = formats::read_text(path)?;
    toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
        CliError::format(path, line, e.message().to_string())
    })
}
