//! Component extractors: saliency weighting, low-rank memory projection, and
//! moving-average trend smoothing.
//!
//! Two formulations are exposed. Projection mode works on a whole series:
//! saliency is a normalized weight vector applied as a diagonal projection,
//! memory is the rank-k principal-subspace projection, trend is the low-pass
//! part. Experiment mode works element-wise on a training window: saliency is
//! the absolute first difference, memory is the raw window, trend is the
//! smoothed window. Experiment mode is what the predictor consumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{truncated_svd, LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecomposeError {
    #[error("input matrix has no rows")]
    EmptyMatrix,
    #[error("saliency weight length {weights} does not match row count {rows}")]
    WeightLengthMismatch { weights: usize, rows: usize },
    #[error("smoothing window must be odd and >= 1, got {window}")]
    InvalidWindow { window: usize },
    #[error("window must have at least 2 rows, got {rows}")]
    WindowTooShort { rows: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Normalized per-time-step importance weights: nonnegative, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyWeights {
    w: Vec<f64>,
}

impl SaliencyWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Which formulation produced a [`Decomposition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecompositionMode {
    /// Operator form: s is D_w·x (T×d), m is the rank-k projection (k×d),
    /// g is the smoothed series (T×d).
    Projection,
    /// Element-wise form: s, m, g all share the window shape L×d.
    Experiment,
}

/// The three extracted components of one series or window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub s: Matrix,
    pub m: Matrix,
    pub g: Matrix,
    pub mode: DecompositionMode,
}

/// Importance weights from temporal first differences: w_t ∝ ‖x_t − x_{t−1}‖₂
/// with the first gradient defined as zero. A constant series (all gradients
/// zero) falls back to uniform weights.
pub fn saliency_weights(x: &Matrix) -> Result<SaliencyWeights, DecomposeError> {
    let t = x.rows();
    if t == 0 {
        return Err(DecomposeError::EmptyMatrix);
    }
    let mut w = vec![0.0; t];
    for row in 1..t {
        let norm_sq: f64 = x
            .row(row)
            .iter()
            .zip(x.row(row - 1))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        w[row] = norm_sq.sqrt();
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        for v in &mut w {
            *v /= total;
        }
    } else {
        w.fill(1.0 / t as f64);
    }
    Ok(SaliencyWeights { w })
}

/// Diagonal saliency projection: row t of the output is w_t times row t of `x`.
pub fn saliency_project(x: &Matrix, w: &SaliencyWeights) -> Result<Matrix, DecomposeError> {
    if w.len() != x.rows() {
        return Err(DecomposeError::WeightLengthMismatch {
            weights: w.len(),
            rows: x.rows(),
        });
    }
    let mut out = x.clone();
    for (r, &wt) in w.as_slice().iter().enumerate() {
        for c in 0..x.cols() {
            out.set(r, c, wt * x.get(r, c));
        }
    }
    Ok(out)
}

/// Rank-k memory projection U_kᵀ·x onto the principal subspace, shape k×d.
pub fn memory_project(x: &Matrix, k: usize) -> Result<Matrix, DecomposeError> {
    if x.rows() == 0 {
        return Err(DecomposeError::EmptyMatrix);
    }
    let svd = truncated_svd(x, k)?;
    Ok(svd.u.transpose().matmul(x)?)
}

/// Centered moving average per column. Boundaries shrink the window to the
/// available indices, so constants are fixed points and window 1 is the
/// identity. The window must be odd.
pub fn trend_smooth(x: &Matrix, window: usize) -> Result<Matrix, DecomposeError> {
    if window == 0 || window % 2 == 0 {
        return Err(DecomposeError::InvalidWindow { window });
    }
    let half = window / 2;
    let t = x.rows();
    let mut out = Matrix::zeros(t, x.cols());
    for r in 0..t {
        let lo = r.saturating_sub(half);
        let hi = (r + half).min(t.saturating_sub(1));
        let count = (hi - lo + 1) as f64;
        for c in 0..x.cols() {
            let sum: f64 = (lo..=hi).map(|i| x.get(i, c)).sum();
            out.set(r, c, sum / count);
        }
    }
    Ok(out)
}

/// Split into low- and high-frequency parts: low is the smoothed series, high
/// is the remainder, and `low + high` reproduces `x` bit-for-bit.
pub fn split_frequencies(x: &Matrix, window: usize) -> Result<(Matrix, Matrix), DecomposeError> {
    let smoothed = trend_smooth(x, window)?;
    let mut low = Matrix::zeros(x.rows(), x.cols());
    let mut high = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let (l, h) = exact_complement(x.get(r, c), smoothed.get(r, c));
            low.set(r, c, l);
            high.set(r, c, h);
        }
    }
    Ok((low, high))
}

/// Adjust (low, x − low) within rounding error until `low + high == x` holds
/// under f64 addition. One subtraction is exact in the common case; the
/// alternating refinement handles the half-ulp ties at mismatched magnitudes.
fn exact_complement(x: f64, low0: f64) -> (f64, f64) {
    let mut low = low0;
    let mut high = x - low;
    for _ in 0..8 {
        if low + high == x {
            return (low, high);
        }
        low = x - high;
        if low + high == x {
            return (low, high);
        }
        high = x - low;
    }
    // Unreachable in round-to-nearest for finite inputs; halving is always an
    // exact split.
    (x / 2.0, x - x / 2.0)
}

/// Element-wise decomposition of a training window: saliency is |x_t − x_{t−1}|
/// with a zero first row, memory is the window itself, trend is the centered
/// moving average. All three outputs share the window shape.
pub fn decompose_experiment(
    x_window: &Matrix,
    smooth_window: usize,
) -> Result<Decomposition, DecomposeError> {
    let l = x_window.rows();
    if l < 2 {
        return Err(DecomposeError::WindowTooShort { rows: l });
    }
    let mut s = Matrix::zeros(l, x_window.cols());
    for r in 1..l {
        for c in 0..x_window.cols() {
            s.set(r, c, (x_window.get(r, c) - x_window.get(r - 1, c)).abs());
        }
    }
    let g = trend_smooth(x_window, smooth_window)?;
    Ok(Decomposition {
        s,
        m: x_window.clone(),
        g,
        mode: DecompositionMode::Experiment,
    })
}

/// Operator-form decomposition of a whole series: saliency projection D_w·x,
/// rank-k memory projection, and smoothed trend.
pub fn decompose_projection(
    x: &Matrix,
    k: usize,
    smooth_window: usize,
) -> Result<Decomposition, DecomposeError> {
    let w = saliency_weights(x)?;
    let s = saliency_project(x, &w)?;
    let m = memory_project(x, k)?;
    let g = trend_smooth(x, smooth_window)?;
    Ok(Decomposition {
        s,
        m,
        g,
        mode: DecompositionMode::Projection,
    })
}
