//! Command-line workflows over the `motionmask` library.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad flags, bad config
//! file, inconsistent dimensions), 3 for input and format errors.

mod commands;
mod input;
mod manifest;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use motionmask::config::{canonical_key, parse_config_text, validate_config, Config};
use motionmask::error::Error;

pub use manifest::{RunManifest, ARTIFACT_FORMAT};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "motionmask", version, about = "Spectral complexity analysis, masking and decoding for motion tokens")]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; they override values from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` configuration file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// DCT window length (even, at least 4)
    #[arg(long, global = true, value_name = "W")]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub alpha0: Option<f64>,
    #[arg(long = "lambda-sem", global = true)]
    pub lambda_sem: Option<f64>,
    #[arg(long = "r-exp", global = true)]
    pub r_exp: Option<usize>,
    #[arg(long = "lambda-d", global = true)]
    pub lambda_d: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long = "sigma-max", global = true)]
    pub sigma_max: Option<f64>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long = "t-global", global = true)]
    pub t_global: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

impl ConfigArgs {
    fn overrides(&self) -> BTreeMap<String, String> {
        let pairs: [(&str, Option<String>); 14] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("window", self.window.map(|v| v.to_string())),
            ("epsilon", self.epsilon.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("alpha0", self.alpha0.map(|v| v.to_string())),
            ("lambda_sem", self.lambda_sem.map(|v| v.to_string())),
            ("r_exp", self.r_exp.map(|v| v.to_string())),
            ("lambda_d", self.lambda_d.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("sigma_max", self.sigma_max.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("t_global", self.t_global.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect()
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<Config, CliError> {
        let mut raw = BTreeMap::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let file = parse_config_text(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            for (k, v) in file {
                let canon = canonical_key(&k)
                    .ok_or_else(|| CliError::Config(format!("{}: unknown configuration key `{k}`", path.display())))?;
                raw.insert(canon.to_string(), v);
            }
        }
        raw.extend(self.overrides());
        validate_config(&raw).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    /// Content-focused selection
    Cfs,
    Uniform,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-frame spectral descriptors of a motion file or synthetic recipe
    Analyze {
        /// Motion file (CSV rows or JSONL with a `frames` field)
        #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
        input: Option<PathBuf>,
        /// Synthetic recipe, e.g. `static:32+sine:2:32+noise:32`
        #[arg(long)]
        synth: Option<String>,
        /// Feature dimensions of the synthetic sequence
        #[arg(long, default_value_t = 3)]
        dims: usize,
        /// Quantize and re-embed through this codebook before analysis
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Also write the spectral similarity matrix
        #[arg(long)]
        similarity: bool,
    },
    /// Content-focused mask positions for one sequence
    Maskplan {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        condition: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        /// Mask budget
        #[arg(long, conflicts_with = "r", required_unless_present = "r")]
        k: Option<usize>,
        /// Schedule position; the budget becomes ⌈cos(πr/2)·#valid⌉
        #[arg(long)]
        r: Option<f64>,
    },
    /// Fit a codebook if needed, tokenize and train the masked-token model
    Train {
        /// Directory of motion files; optional `conditions.csv` holds one row per file
        #[arg(long, conflicts_with = "synth")]
        corpus: Option<PathBuf>,
        /// Synthetic recipe used for every training sequence
        #[arg(long)]
        synth: Option<String>,
        /// Number of synthetic sequences
        #[arg(long, default_value_t = 8)]
        sequences: usize,
        #[arg(long, default_value_t = 3)]
        dims: usize,
        /// Use this codebook instead of fitting one
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SelectionArg::Cfs)]
        selection: SelectionArg,
    },
    /// Decode a token sequence from a checkpoint
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        condition: PathBuf,
        /// Number of frames to generate
        #[arg(long)]
        length: usize,
    },
    /// Rank correlation of complexity signals with synthetic labels
    CompareSignals {
        #[arg(long, default_value = motionmask::experiment::DEFAULT_RECIPE)]
        synth: String,
        #[arg(long, default_value_t = motionmask::experiment::DEFAULT_SEQUENCES)]
        sequences: usize,
        #[arg(long, default_value_t = motionmask::experiment::DEFAULT_DIMS)]
        dims: usize,
    },
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = cli.config.resolve()?;
    commands::dispatch(&cli.command, &config, &cli.config.out)
}
