//! Evaluation: regression metrics, the seven-configuration component
//! ablation, a naive persistence baseline, and a wall-clock sweep that checks
//! the pipeline stays linear in the sequence length.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{synth_series, DecomposedSample, SplitDataset, SynthKind};
use crate::decompose::{
    decompose_experiment, decompose_projection, Decomposition, DecompositionMode,
};
use crate::linalg::Matrix;
use crate::model::{init_params, predict, ModelError, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input where at least one value is required")]
    Empty,
    #[error("ablation must keep at least one component enabled")]
    NoComponents,
    #[error("persistence baseline needs experiment-mode samples")]
    WrongMode,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// MAE, RMSE, and R². R² is `None` when the target has zero variance, where
/// the ratio is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub n: usize,
}

/// Metrics over paired truth/prediction vectors.
pub fn compute_metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics, EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    let n = y.len();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let nf = n as f64;
    let mae = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / nf;
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let rmse = (ss_res / nf).sqrt();
    let y_mean = y.iter().sum::<f64>() / nf;
    let ss_tot: f64 = y.iter().map(|a| (a - y_mean) * (a - y_mean)).sum();
    let r2 = if ss_tot == 0.0 {
        None
    } else {
        Some(1.0 - ss_res / ss_tot)
    };
    Ok(Metrics { mae, rmse, r2, n })
}

/// Which components stay enabled in an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub use_saliency: bool,
    pub use_memory: bool,
    pub use_trend: bool,
}

impl AblationConfig {
    pub const FULL: AblationConfig = AblationConfig {
        use_saliency: true,
        use_memory: true,
        use_trend: true,
    };

    /// The seven nonempty masks, in the conventional reporting order.
    pub fn all_seven() -> [AblationConfig; 7] {
        let cfg = |s, m, g| AblationConfig {
            use_saliency: s,
            use_memory: m,
            use_trend: g,
        };
        [
            cfg(true, true, true),
            cfg(false, true, true),
            cfg(true, false, true),
            cfg(true, true, false),
            cfg(false, true, false),
            cfg(true, false, false),
            cfg(false, false, true),
        ]
    }

    pub fn label(&self) -> &'static str {
        match (self.use_saliency, self.use_memory, self.use_trend) {
            (true, true, true) => "Full (S+M+G)",
            (false, true, true) => "No Saliency",
            (true, false, true) => "No Memory",
            (true, true, false) => "No Trend",
            (false, true, false) => "Only Memory",
            (true, false, false) => "Only Saliency",
            (false, false, true) => "Only Trend",
            (false, false, false) => "(empty)",
        }
    }
}

/// Zero-mask disabled components; shapes and parameters are untouched so all
/// ablation runs stay architecturally comparable.
pub fn ablate(dec: &Decomposition, cfg: &AblationConfig) -> Result<Decomposition, EvalError> {
    if !cfg.use_saliency && !cfg.use_memory && !cfg.use_trend {
        return Err(EvalError::NoComponents);
    }
    let zero_like = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
    Ok(Decomposition {
        s: if cfg.use_saliency {
            dec.s.clone()
        } else {
            zero_like(&dec.s)
        },
        m: if cfg.use_memory {
            dec.m.clone()
        } else {
            zero_like(&dec.m)
        },
        g: if cfg.use_trend {
            dec.g.clone()
        } else {
            zero_like(&dec.g)
        },
        mode: dec.mode,
    })
}

/// Apply one ablation mask to a whole dataset.
pub fn ablate_dataset(data: &SplitDataset, cfg: &AblationConfig) -> Result<SplitDataset, EvalError> {
    let mask = |samples: &[DecomposedSample]| -> Result<Vec<DecomposedSample>, EvalError> {
        samples
            .iter()
            .map(|s| {
                Ok(DecomposedSample {
                    components: ablate(&s.components, cfg)?,
                    target: s.target,
                })
            })
            .collect()
    };
    Ok(SplitDataset {
        train: mask(&data.train)?,
        validation: mask(&data.validation)?,
        test: mask(&data.test)?,
        window_len: data.window_len,
        target_feature: data.target_feature,
    })
}

/// Persistence forecast: predict the window's final target-feature value.
pub fn naive_baseline(
    samples: &[DecomposedSample],
    target_feature: usize,
) -> Result<Metrics, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut y = Vec::with_capacity(samples.len());
    let mut y_hat = Vec::with_capacity(samples.len());
    for sample in samples {
        if sample.components.mode != DecompositionMode::Experiment {
            return Err(EvalError::WrongMode);
        }
        let m = &sample.components.m;
        y.push(sample.target);
        y_hat.push(m.get(m.rows() - 1, target_feature));
    }
    compute_metrics(&y, &y_hat)
}

/// Model predictions over a sample list, paired with the truths.
pub fn predictions(
    params: &ModelParams,
    samples: &[DecomposedSample],
) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let mut y = Vec::with_capacity(samples.len());
    let mut y_hat = Vec::with_capacity(samples.len());
    for sample in samples {
        y.push(sample.target);
        y_hat.push(predict(params, &sample.components)?);
    }
    Ok((y, y_hat))
}

/// Metrics of a trained model on one split.
pub fn evaluate_split(
    params: &ModelParams,
    samples: &[DecomposedSample],
) -> Result<Metrics, EvalError> {
    let (y, y_hat) = predictions(params, samples)?;
    compute_metrics(&y, &y_hat)
}

/// Metrics per split plus the interpretability extras that go into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train: Metrics,
    pub validation: Metrics,
    pub test: Metrics,
    pub alpha: [f64; 3],
    pub param_count: usize,
    /// Median wall time of one forward pass, microseconds. Only measured on
    /// request, because wall-clock readings are not reproducible.
    pub forward_time_us: Option<f64>,
    pub config: serde_json::Value,
}

/// Build a report for a trained model. `measure_forward_time` trades
/// byte-reproducible output for a timing sample.
pub fn build_report(
    params: &ModelParams,
    data: &SplitDataset,
    config: serde_json::Value,
    measure_forward_time: bool,
) -> Result<EvalReport, EvalError> {
    let alpha = crate::model::softmax_alpha(&params.theta);
    let forward_time_us = if measure_forward_time {
        data.test
            .first()
            .or(data.train.first())
            .map(|sample| median_forward_micros(params, &sample.components))
    } else {
        None
    };
    Ok(EvalReport {
        train: evaluate_split(params, &data.train)?,
        validation: evaluate_split(params, &data.validation)?,
        test: evaluate_split(params, &data.test)?,
        alpha,
        param_count: params.param_count(),
        forward_time_us,
        config,
    })
}

fn median_forward_micros(params: &ModelParams, dec: &Decomposition) -> f64 {
    let mut times = Vec::with_capacity(TIMING_REPEATS);
    for _ in 0..TIMING_WARMUPS {
        let _ = predict(params, dec);
    }
    for _ in 0..TIMING_REPEATS {
        let start = Instant::now();
        let _ = std::hint::black_box(predict(params, dec));
        times.push(start.elapsed().as_secs_f64() * 1e6);
    }
    median(&mut times)
}

const TIMING_REPEATS: usize = 9;
const TIMING_WARMUPS: usize = 2;

fn median(times: &mut [f64]) -> f64 {
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

/// Median wall time of the full decomposition-plus-forward pipeline at each
/// sequence length: projection-mode decomposition at rank `k`, element-wise
/// decomposition, and a forward pass over the whole window.
pub fn timing_sweep(t_values: &[usize], k: usize, d: usize) -> Vec<(usize, f64)> {
    // Keep large transient buffers in the malloc arena; repeated mmap/munmap
    // of half-megabyte matrices otherwise distorts the per-length medians.
    #[cfg(target_env = "gnu")]
    {
        static RAISE_MMAP_THRESHOLD: std::sync::Once = std::sync::Once::new();
        RAISE_MMAP_THRESHOLD.call_once(|| unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 64 * 1024 * 1024);
        });
    }
    let hidden = 16;
    let smooth = 5;
    let params = init_params(d, hidden, 7);
    t_values
        .iter()
        .map(|&t| {
            let series = synth_series(SynthKind::RandomWalk { step: 1.0 }, t, d, 13);
            let run = || {
                let proj = decompose_projection(&series, k, smooth).expect("pipeline");
                let exp = decompose_experiment(&series, smooth).expect("pipeline");
                let y_hat = predict(&params, &exp).expect("pipeline");
                // Fold outputs together so the optimizer cannot elide the work.
                proj.m.get(0, 0) + y_hat
            };
            for _ in 0..TIMING_WARMUPS {
                std::hint::black_box(run());
            }
            let mut times = Vec::with_capacity(TIMING_REPEATS);
            for _ in 0..TIMING_REPEATS {
                let start = Instant::now();
                std::hint::black_box(run());
                times.push(start.elapsed().as_secs_f64());
            }
            (t, median(&mut times))
        })
        .collect()
}
