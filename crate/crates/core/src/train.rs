//! Training stack: MSE objective, AdamW updates with decoupled weight decay,
//! seeded mini-batch shuffling, and early stopping that retains the best
//! validation checkpoint.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SplitDataset;
use crate::model::{backward, forward, predict, softmax_alpha, Gradients, ModelError, ModelParams, TENSOR_NAMES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input where at least one value is required")]
    Empty,
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },
    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: &'static str },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the weight-decay coefficient enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecayMode {
    /// AdamW semantics: decay applied directly to parameters, outside the
    /// adaptive step.
    Decoupled,
    /// Classic L2 regularization folded into the gradient.
    L2Loss,
}

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub smooth_window: usize,
    pub hidden_dim: usize,
    pub weight_decay_mode: WeightDecayMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            smooth_window: 5,
            hidden_dim: 16,
            weight_decay_mode: WeightDecayMode::Decoupled,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(TrainError::InvalidConfig(format!(
                    "{name} must be in [0, 1), got {beta}"
                )));
            }
        }
        if self.patience < 1 {
            return Err(TrainError::InvalidConfig("patience must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// First/second moment accumulators, one slot per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(d: usize, h: usize) -> Self {
        Self {
            m: Gradients::zeros(d, h),
            v: Gradients::zeros(d, h),
            t: 0,
        }
    }
}

/// Why the training loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub alpha: [f64; 3],
}

/// Per-epoch history plus the best-checkpoint bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainLog {
    /// One JSON object per epoch, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.epochs {
            out.push_str(&serde_json::to_string(rec).expect("epoch record serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Mean squared error over paired vectors.
pub fn mse_loss(y: &[f64], y_hat: &[f64]) -> Result<f64, TrainError> {
    if y.len() != y_hat.len() {
        return Err(TrainError::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(TrainError::Empty);
    }
    let sum: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / y.len() as f64)
}

/// One AdamW update. Consumes and returns the parameters and state so a
/// failed step leaves nothing half-written.
///
/// m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g², then the bias-corrected step
/// θ ← θ − η·m̂/(√v̂+ε) − η·λ·θ with the decay term decoupled. In
/// [`WeightDecayMode::L2Loss`] the decay instead enters the gradient as 2λθ.
pub fn adamw_step(
    mut params: ModelParams,
    grads: &Gradients,
    mut state: OptimizerState,
    cfg: &TrainConfig,
) -> Result<(ModelParams, OptimizerState), TrainError> {
    for (idx, name) in TENSOR_NAMES.iter().enumerate() {
        if grads.tensor(idx).iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient { tensor: name });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let lr = cfg.learning_rate;
    let lambda = cfg.weight_decay;

    for idx in 0..TENSOR_NAMES.len() {
        let g_slice = grads.tensor(idx);
        let p_slice = params.tensor_mut(idx);
        // Split borrows: moments live in separate structs.
        let m_slice = state.m.tensor_mut(idx);
        for (i, p) in p_slice.iter_mut().enumerate() {
            let g = match cfg.weight_decay_mode {
                WeightDecayMode::Decoupled => g_slice[i],
                WeightDecayMode::L2Loss => g_slice[i] + 2.0 * lambda * *p,
            };
            m_slice[i] = cfg.beta1 * m_slice[i] + (1.0 - cfg.beta1) * g;
        }
        let v_slice = state.v.tensor_mut(idx);
        for (i, p) in p_slice.iter_mut().enumerate() {
            let g = match cfg.weight_decay_mode {
                WeightDecayMode::Decoupled => g_slice[i],
                WeightDecayMode::L2Loss => g_slice[i] + 2.0 * lambda * *p,
            };
            v_slice[i] = cfg.beta2 * v_slice[i] + (1.0 - cfg.beta2) * g * g;
        }
    }
    for idx in 0..TENSOR_NAMES.len() {
        let m_slice = state.m.tensor(idx).to_vec();
        let v_slice = state.v.tensor(idx).to_vec();
        let p_slice = params.tensor_mut(idx);
        for (i, p) in p_slice.iter_mut().enumerate() {
            let m_hat = m_slice[i] / bc1;
            let v_hat = v_slice[i] / bc2;
            let mut next = *p - lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            if cfg.weight_decay_mode == WeightDecayMode::Decoupled {
                next -= lr * lambda * *p;
            }
            *p = next;
        }
    }
    Ok((params, state))
}

/// Validation MSE of `params` over a sample list.
pub fn evaluate_mse(
    params: &ModelParams,
    samples: &[crate::data::DecomposedSample],
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut sum = 0.0;
    for sample in samples {
        let e = predict(params, &sample.components)? - sample.target;
        sum += e * e;
    }
    Ok(sum / samples.len() as f64)
}

/// Full training loop. Mini-batches are reshuffled each epoch with a seeded
/// generator; validation and test order is never shuffled. Stops after
/// `patience` epochs without strict validation improvement and returns the
/// parameters from the best epoch, not the last.
pub fn train(
    params: ModelParams,
    data: &SplitDataset,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog), TrainError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptySplit { split: "train" });
    }
    if data.validation.is_empty() {
        return Err(TrainError::EmptySplit { split: "validation" });
    }

    let d = params.input_dim;
    let h = params.hidden_dim;
    let mut params = params;
    let mut state = OptimizerState::new(d, h);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1); // distinct stream from parameter init

    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();

    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut epochs_since_improve = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros(d, h);
            for &i in batch {
                let sample = &data.train[i];
                let trace = forward(&params, &sample.components)?;
                let (loss, grads) = backward(&params, &sample.components, &trace, sample.target);
                epoch_loss += loss;
                acc.add_assign(&grads);
            }
            acc.scale(1.0 / batch.len() as f64);
            let stepped = adamw_step(params, &acc, state, cfg)?;
            params = stepped.0;
            state = stepped.1;
        }
        let train_loss = epoch_loss / n as f64;
        let val_loss = evaluate_mse(&params, &data.validation)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            alpha: softmax_alpha(&params.theta),
        });

        if val_loss < best_val - 1e-12 {
            best_val = val_loss;
            best_params = params.clone();
            log.best_epoch = epoch;
            epochs_since_improve = 0;
        } else {
            epochs_since_improve += 1;
            if epochs_since_improve >= cfg.patience {
                log.stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }

    Ok((best_params, log))
}
