//! Run configuration: a single versioned TOML document. CLI flags override
//! the seed and output directory; everything is validated before any output
//! path is touched.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_time::data::SynthKind;
use sparse_time::train::{TrainConfig, WeightDecayMode};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub bench: BenchConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic {
        #[serde(flatten)]
        kind: SynthKind,
        #[serde(default = "default_length")]
        length: usize,
        #[serde(default = "default_features")]
        features: usize,
        /// Generator seed; falls back to the run seed.
        #[serde(default)]
        data_seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        feature_columns: Vec<String>,
        target_column: String,
        #[serde(default = "default_delimiter")]
        delimiter: String,
        #[serde(default)]
        missing_sentinel: Option<f64>,
    },
}

fn default_length() -> usize {
    600
}
fn default_features() -> usize {
    1
}
fn default_delimiter() -> String {
    ",".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowConfig {
    #[serde(default = "default_window_len")]
    pub length: usize,
    #[serde(default = "default_smooth")]
    pub smooth_window: usize,
    /// Rank for the projection-mode memory; defaults to min(4, features).
    #[serde(default)]
    pub rank: Option<usize>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            length: default_window_len(),
            smooth_window: default_smooth(),
            rank: None,
        }
    }
}

fn default_window_len() -> usize {
    24
}
fn default_smooth() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: default_hidden(),
        }
    }
}

fn default_hidden() -> usize {
    16
}

/// The `[train]` table; mirrors [`TrainConfig`] with an optional seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_decay_mode")]
    pub weight_decay_mode: WeightDecayMode,
    #[serde(default)]
    pub measure_forward_time: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

fn default_lr() -> f64 {
    1e-3
}
fn default_weight_decay() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_decay_mode() -> WeightDecayMode {
    WeightDecayMode::Decoupled
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(default = "default_bench_lengths")]
    pub lengths: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            lengths: default_bench_lengths(),
        }
    }
}

fn default_bench_lengths() -> Vec<usize> {
    vec![1000, 2000, 4000, 8000]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Structural validation; runs before any output file is created.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        match &self.data {
            DataConfig::Synthetic {
                length, features, ..
            } => {
                if *length < 20 {
                    return Err(CliError::Config(format!(
                        "synthetic length must be >= 20, got {length}"
                    )));
                }
                if *features < 1 {
                    return Err(CliError::Config("features must be >= 1".into()));
                }
                if let Some(rank) = self.window.rank {
                    if rank == 0 || rank > (*features).min(*length) {
                        return Err(CliError::Config(format!(
                            "rank {rank} out of range for a {length}x{features} series"
                        )));
                    }
                }
            }
            DataConfig::Csv {
                target_column,
                delimiter,
                ..
            } => {
                if target_column.is_empty() {
                    return Err(CliError::Config("target_column must not be empty".into()));
                }
                if delimiter.len() != 1 || !delimiter.is_ascii() {
                    return Err(CliError::Config(format!(
                        "delimiter must be one ascii character, got {delimiter:?}"
                    )));
                }
            }
        }
        if self.window.length < 2 {
            return Err(CliError::Config(format!(
                "window length must be >= 2, got {}",
                self.window.length
            )));
        }
        if self.window.smooth_window == 0 || self.window.smooth_window % 2 == 0 {
            return Err(CliError::Config(format!(
                "smooth_window must be odd and >= 1, got {}",
                self.window.smooth_window
            )));
        }
        if self.model.hidden_dim < 1 {
            return Err(CliError::Config("hidden_dim must be >= 1".into()));
        }
        self.train_config(0).validate().map_err(CliError::from)?;
        if self.bench.lengths.is_empty() {
            return Err(CliError::Config("bench lengths must not be empty".into()));
        }
        if !self.bench.lengths.windows(2).all(|w| w[0] < w[1]) {
            return Err(CliError::Config(
                "bench lengths must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Effective seed: the `--seed` flag wins over `[train] seed`.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Option<u64> {
        flag.or(self.train.seed)
    }

    /// Seed for training-style commands, where it is mandatory.
    pub fn require_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        self.resolve_seed(flag).ok_or_else(|| {
            CliError::Config("a seed is required: pass --seed or set [train] seed".into())
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            weight_decay: self.train.weight_decay,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            epsilon: self.train.epsilon,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed,
            smooth_window: self.window.smooth_window,
            hidden_dim: self.model.hidden_dim,
            weight_decay_mode: self.train.weight_decay_mode,
        }
    }

    /// Projection-mode rank, defaulting to min(4, features) of the series.
    pub fn resolve_rank(&self, series_cols: usize, series_rows: usize) -> usize {
        self.window
            .rank
            .unwrap_or_else(|| 4usize.min(series_cols).min(series_rows).max(1))
    }
}
