//! Data pipeline: CSV ingestion with imputation, z-score normalization from
//! training-range statistics only, sliding-window sample construction,
//! chronological 70/15/15 splitting, and seeded synthetic generators.

use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{decompose_experiment, Decomposition, DecomposeError};
use crate::linalg::{LinalgError, Matrix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {path}")]
    FileNotFound { path: String },
    #[error("csv read failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("column not found: {name}")]
    MissingColumn { name: String },
    #[error("file has a header but zero data rows")]
    NoRows,
    #[error("column {name} has no observed values to impute from")]
    AllMissing { name: String },
    #[error("training range is empty")]
    EmptyTrainRange,
    #[error("window length must be >= 2, got {window}")]
    WindowTooShort { window: usize },
    #[error("need more rows than the window length: {rows} rows, window {window}")]
    NotEnoughRows { rows: usize, window: usize },
    #[error("series too short to split: {rows} rows, need at least 10")]
    SeriesTooShort { rows: usize },
    #[error("{split} split has {rows} rows, too few for window length {window}")]
    SplitTooShort {
        split: &'static str,
        rows: usize,
        window: usize,
    },
    #[error("invalid dataset cache: {0}")]
    InvalidCache(String),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Parsed numeric table: selected feature columns after imputation, plus the
/// index of the prediction target among them.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub values: Matrix,
    pub target_index: usize,
}

/// CSV parsing knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Values equal to this sentinel are treated as missing (for datasets
    /// that encode gaps as, say, -200).
    pub missing_sentinel: Option<f64>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            missing_sentinel: None,
        }
    }
}

/// Read the named columns from a headered CSV file. Cells that fail to parse
/// as finite numbers (or equal the configured sentinel) are treated as
/// missing and imputed by forward fill, then backward fill for a leading gap.
pub fn ingest_csv(
    path: &Path,
    feature_columns: &[String],
    target_column: &str,
    opts: &CsvOptions,
) -> Result<RawTable, DataError> {
    if !path.exists() {
        return Err(DataError::FileNotFound {
            path: path.display().to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .from_path(path)?;
    let headers = reader.headers()?.clone();

    let mut feature_names: Vec<String> = feature_columns.to_vec();
    if !feature_names.iter().any(|n| n == target_column) {
        feature_names.push(target_column.to_string());
    }
    let mut col_indices = Vec::with_capacity(feature_names.len());
    for name in &feature_names {
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn { name: name.clone() })?;
        col_indices.push(idx);
    }
    let target_index = feature_names
        .iter()
        .position(|n| n == target_column)
        .expect("target appended above");

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); feature_names.len()];
    for record in reader.records() {
        let record = record?;
        for (slot, &idx) in col_indices.iter().enumerate() {
            let cell = record.get(idx).unwrap_or("");
            let parsed = cell.trim().parse::<f64>().ok().filter(|v| v.is_finite());
            let value = match (parsed, opts.missing_sentinel) {
                (Some(v), Some(sentinel)) if v == sentinel => None,
                (other, _) => other,
            };
            columns[slot].push(value);
        }
    }
    let t = columns[0].len();
    if t == 0 {
        return Err(DataError::NoRows);
    }

    for (col, name) in columns.iter_mut().zip(&feature_names) {
        impute(col).ok_or_else(|| DataError::AllMissing { name: name.clone() })?;
    }

    let mut data = Vec::with_capacity(t * feature_names.len());
    for row in 0..t {
        for col in &columns {
            data.push(col[row].expect("imputed"));
        }
    }
    let values = Matrix::new(t, feature_names.len(), data)?;
    Ok(RawTable {
        feature_names,
        values,
        target_index,
    })
}

/// Forward fill, then backward fill. Returns `None` if the column has no
/// observed value at all.
fn impute(col: &mut [Option<f64>]) -> Option<()> {
    let mut last = None;
    for v in col.iter_mut() {
        match *v {
            Some(x) => last = Some(x),
            None => *v = last,
        }
    }
    let mut next = None;
    for v in col.iter_mut().rev() {
        match *v {
            Some(x) => next = Some(x),
            None => *v = next,
        }
    }
    if col.first()?.is_some() {
        Some(())
    } else {
        None
    }
}

/// Per-feature normalization statistics, computed on the training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub epsilon: f64,
}

impl NormStats {
    /// Inverse transform: x̃·(σ+ε)+μ.
    pub fn denormalize(&self, value: f64, feature: usize) -> f64 {
        value * (self.std[feature] + self.epsilon) + self.mean[feature]
    }
}

/// Z-score every row of `x` using mean and population standard deviation
/// computed from `train_rows` alone. A constant feature maps to zeros via
/// the epsilon guard.
pub fn zscore(x: &Matrix, train_rows: Range<usize>) -> Result<(Matrix, NormStats), DataError> {
    if train_rows.is_empty() {
        return Err(DataError::EmptyTrainRange);
    }
    let d = x.cols();
    let n = train_rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in train_rows.clone() {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += x.get(r, c);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; d];
    for r in train_rows.clone() {
        for (c, s) in std.iter_mut().enumerate() {
            let dev = x.get(r, c) - mean[c];
            *s += dev * dev;
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
    }
    let epsilon = 1e-8;
    let mut out = Matrix::zeros(x.rows(), d);
    for r in 0..x.rows() {
        for c in 0..d {
            out.set(r, c, (x.get(r, c) - mean[c]) / (std[c] + epsilon));
        }
    }
    Ok((out, NormStats { mean, std, epsilon }))
}

/// Sliding supervised samples: window i is rows [i, i+L), its target the
/// next row's value in the target feature. Produces exactly T − L samples.
pub fn make_windows(
    x: &Matrix,
    l: usize,
    target_feature: usize,
) -> Result<Vec<(Matrix, f64)>, DataError> {
    if l < 2 {
        return Err(DataError::WindowTooShort { window: l });
    }
    let t = x.rows();
    if t <= l {
        return Err(DataError::NotEnoughRows { rows: t, window: l });
    }
    let mut out = Vec::with_capacity(t - l);
    for i in 0..(t - l) {
        let window = x.row_slice(i, i + l);
        let target = x.get(i + l, target_feature);
        out.push((window, target));
    }
    Ok(out)
}

/// Contiguous chronological 70/15/15 ranges; the flooring remainder goes to
/// the test split.
pub fn chrono_split(t: usize) -> Result<(Range<usize>, Range<usize>, Range<usize>), DataError> {
    if t < 10 {
        return Err(DataError::SeriesTooShort { rows: t });
    }
    let train_end = (0.7 * t as f64).floor() as usize;
    let val_end = train_end + (0.15 * t as f64).floor() as usize;
    Ok((0..train_end, train_end..val_end, val_end..t))
}

/// Synthetic series families for desk-scale experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// Linear ramp per column plus white noise of the given amplitude.
    TrendDominant {
        #[serde(default = "default_trend_noise")]
        noise: f64,
    },
    /// Quiet baseline with sparse two-sided spike events; each in-spike value
    /// continues at `followup` times the last absolute difference, so recent
    /// differences carry the predictive signal.
    SpikeDominant {
        #[serde(default = "default_spike_prob")]
        spike_prob: f64,
        #[serde(default = "default_followup")]
        followup: f64,
    },
    /// Sinusoid plus a mild ramp and white noise.
    Seasonal {
        #[serde(default = "default_period")]
        period: f64,
        #[serde(default = "default_seasonal_noise")]
        noise: f64,
    },
    /// Cumulative Gaussian steps.
    RandomWalk {
        #[serde(default = "default_step")]
        step: f64,
    },
}

fn default_trend_noise() -> f64 {
    0.3
}
fn default_spike_prob() -> f64 {
    0.12
}
fn default_followup() -> f64 {
    0.5
}
fn default_period() -> f64 {
    20.0
}
fn default_seasonal_noise() -> f64 {
    0.05
}
fn default_step() -> f64 {
    1.0
}

/// Deterministic seeded generator for each [`SynthKind`].
pub fn synth_series(kind: SynthKind, t: usize, d: usize, seed: u64) -> Matrix {
    assert!(t >= 20, "synthetic series needs at least 20 rows");
    assert!(d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Matrix::zeros(t, d);
    match kind {
        SynthKind::TrendDominant { noise } => {
            for c in 0..d {
                let span: f64 = rng.random_range(1.5..2.5);
                let slope = span / t as f64;
                let intercept: f64 = rng.random_range(-0.5..0.5);
                for r in 0..t {
                    let v = intercept + slope * r as f64 + noise * gaussian(&mut rng);
                    out.set(r, c, v);
                }
            }
        }
        SynthKind::SpikeDominant {
            spike_prob,
            followup,
        } => {
            let quiet_noise = 0.02;
            for c in 0..d {
                let mut in_spike = 0usize;
                let mut prev = 0.0f64;
                let mut prev2 = 0.0f64;
                for r in 0..t {
                    let v = if in_spike > 0 {
                        let diff = (prev - prev2).abs();
                        if diff < 0.05 || in_spike >= 6 {
                            in_spike = 0;
                            quiet_noise * gaussian(&mut rng)
                        } else {
                            in_spike += 1;
                            followup * diff
                        }
                    } else if rng.random_bool(spike_prob) {
                        in_spike = 1;
                        let amp: f64 = rng.random_range(1.0..2.0);
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        sign * amp
                    } else {
                        quiet_noise * gaussian(&mut rng)
                    };
                    prev2 = prev;
                    prev = v;
                    out.set(r, c, v);
                }
            }
        }
        SynthKind::Seasonal { period, noise } => {
            for c in 0..d {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let ramp: f64 = rng.random_range(0.1..0.4);
                for r in 0..t {
                    let angle = std::f64::consts::TAU * r as f64 / period + phase;
                    let v = angle.sin() + ramp * r as f64 / t as f64 + noise * gaussian(&mut rng);
                    out.set(r, c, v);
                }
            }
        }
        SynthKind::RandomWalk { step } => {
            for c in 0..d {
                let mut level = 0.0;
                for r in 0..t {
                    level += step * gaussian(&mut rng);
                    out.set(r, c, level);
                }
            }
        }
    }
    out
}

/// Standard normal draw via Box-Muller on two uniforms.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// One supervised sample: the decomposed window and its scalar target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedSample {
    pub components: Decomposition,
    pub target: f64,
}

/// Chronologically split, decomposed dataset. Windows never straddle a split
/// boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<DecomposedSample>,
    pub validation: Vec<DecomposedSample>,
    pub test: Vec<DecomposedSample>,
    pub window_len: usize,
    pub target_feature: usize,
}

impl SplitDataset {
    pub fn feature_dim(&self) -> usize {
        self.train
            .first()
            .or(self.validation.first())
            .or(self.test.first())
            .map_or(0, |s| s.components.m.cols())
    }

    /// FNV-1a over every sample's component bytes and target, in order.
    /// Recorded alongside results so runs can prove they shared data.
    pub fn content_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        let mut eat = |bits: u64| {
            for byte in bits.to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.window_len as u64);
        eat(self.target_feature as u64);
        for split in [&self.train, &self.validation, &self.test] {
            eat(split.len() as u64);
            for sample in split.iter() {
                for part in [&sample.components.s, &sample.components.m, &sample.components.g] {
                    for v in part.data() {
                        eat(v.to_bits());
                    }
                }
                eat(sample.target.to_bits());
            }
        }
        hash
    }
}

/// Versioned cache of a prepared dataset's provenance: the normalization
/// statistics and split row ranges needed to rebuild or audit it without
/// re-reading the raw source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCache {
    pub schema_version: u32,
    pub norm_stats: NormStats,
    pub train_rows: (usize, usize),
    pub validation_rows: (usize, usize),
    pub test_rows: (usize, usize),
    pub window_len: usize,
    pub target_feature: usize,
}

pub const DATASET_CACHE_SCHEMA_VERSION: u32 = 1;

impl DatasetCache {
    pub fn capture(
        total_rows: usize,
        stats: &NormStats,
        window_len: usize,
        target_feature: usize,
    ) -> Result<Self, DataError> {
        let (train, val, test) = chrono_split(total_rows)?;
        Ok(Self {
            schema_version: DATASET_CACHE_SCHEMA_VERSION,
            norm_stats: stats.clone(),
            train_rows: (train.start, train.end),
            validation_rows: (val.start, val.end),
            test_rows: (test.start, test.end),
            window_len,
            target_feature,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cache serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let cache: DatasetCache = serde_json::from_str(text)
            .map_err(|e| DataError::InvalidCache(e.to_string()))?;
        if cache.schema_version != DATASET_CACHE_SCHEMA_VERSION {
            return Err(DataError::InvalidCache(format!(
                "unsupported schema_version {}",
                cache.schema_version
            )));
        }
        Ok(cache)
    }
}

/// Run the full preprocessing pipeline on a raw series: chronological split,
/// z-score with train statistics, per-split windows, per-window
/// decomposition.
pub fn prepare_dataset(
    raw: &Matrix,
    window_len: usize,
    target_feature: usize,
    smooth_window: usize,
) -> Result<(SplitDataset, NormStats), DataError> {
    let (train_r, val_r, test_r) = chrono_split(raw.rows())?;
    let (normalized, stats) = zscore(raw, train_r.clone())?;

    let build = |range: Range<usize>, name: &'static str| -> Result<Vec<DecomposedSample>, DataError> {
        let rows = range.len();
        if rows <= window_len {
            return Err(DataError::SplitTooShort {
                split: name,
                rows,
                window: window_len,
            });
        }
        let slice = normalized.row_slice(range.start, range.end);
        let windows = make_windows(&slice, window_len, target_feature)?;
        windows
            .into_iter()
            .map(|(window, target)| {
                Ok(DecomposedSample {
                    components: decompose_experiment(&window, smooth_window)?,
                    target,
                })
            })
            .collect()
    };

    Ok((
        SplitDataset {
            train: build(train_r, "train")?,
            validation: build(val_r, "validation")?,
            test: build(test_r, "test")?,
            window_len,
            target_feature,
        },
        stats,
    ))
}
