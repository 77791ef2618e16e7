//! Decomposition-based time-series forecasting.
//!
//! A series is split into three interpretable components: saliency (local
//! change magnitude), memory (the recent raw signal), and trend (its
//! low-frequency part). A lightweight model projects each into a shared
//! latent space and fuses them with learned softmax weights before
//! predicting the next value. Gradients are derived by hand and optimized
//! with AdamW; the whole pipeline is linear in the sequence length.
//!
//! Modules:
//! - [`linalg`]: dense matrices and a truncated Jacobi SVD
//! - [`decompose`]: the component extractors, in operator and element-wise form
//! - [`model`]: forward pass, analytic gradients
//! - [`train`]: AdamW, mini-batching, early stopping
//! - [`data`]: CSV ingestion, normalization, windowing, splits, synthetic series
//! - [`eval`]: metrics, ablation, persistence baseline, timing sweep

pub mod data;
pub mod decompose;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod train;

pub use data::{DecomposedSample, NormStats, SplitDataset, SynthKind};
pub use decompose::{Decomposition, DecompositionMode, SaliencyWeights};
pub use eval::{AblationConfig, EvalReport, Metrics};
pub use linalg::{Matrix, TruncatedSvd};
pub use model::{ForwardTrace, Gradients, ModelParams};
pub use train::{StopReason, TrainConfig, TrainLog, WeightDecayMode};
