//! The predictor: per-component linear projections into a shared latent
//! space, softmax-weighted fusion, ReLU, and a scalar output head. The
//! backward pass is derived by hand and checked against finite differences
//! in the test suite.
//!
//! Only the last time step of the window is scored against the target; the
//! full per-row output vector is kept on the trace for inspection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{Decomposition, DecompositionMode};
use crate::linalg::{LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("decomposition must be in experiment mode, got {0:?}")]
    WrongMode(DecompositionMode),
    #[error("component shape {got_rows}x{got_cols} does not match expected {want_rows}x{want_cols}")]
    ShapeMismatch {
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Learnable parameter set. Weight matrices are d×h, the output head is a
/// length-h column, and `theta` holds the three fusion logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w_s: Matrix,
    pub w_m: Matrix,
    pub w_g: Matrix,
    pub b_s: Vec<f64>,
    pub b_m: Vec<f64>,
    pub b_g: Vec<f64>,
    pub theta: [f64; 3],
    pub w_o: Vec<f64>,
    pub b_o: f64,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl ModelParams {
    /// Total number of learnable scalars: 3(dh + h) + 3 + h + 1. Independent
    /// of the window and series lengths.
    pub fn param_count(&self) -> usize {
        let d = self.input_dim;
        let h = self.hidden_dim;
        3 * (d * h + h) + 3 + h + 1
    }

    /// Shape consistency check, for checkpoints loaded from disk.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.input_dim;
        let h = self.hidden_dim;
        for w in [&self.w_s, &self.w_m, &self.w_g] {
            w.validate()?;
            if w.shape() != (d, h) {
                return Err(ModelError::ShapeMismatch {
                    got_rows: w.rows(),
                    got_cols: w.cols(),
                    want_rows: d,
                    want_cols: h,
                });
            }
        }
        for b in [&self.b_s, &self.b_m, &self.b_g, &self.w_o] {
            if b.len() != h {
                return Err(ModelError::ShapeMismatch {
                    got_rows: b.len(),
                    got_cols: 1,
                    want_rows: h,
                    want_cols: 1,
                });
            }
        }
        Ok(())
    }
}

/// Per-parameter gradients; shapes mirror [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_s: Matrix,
    pub w_m: Matrix,
    pub w_g: Matrix,
    pub b_s: Vec<f64>,
    pub b_m: Vec<f64>,
    pub b_g: Vec<f64>,
    pub theta: [f64; 3],
    pub w_o: Vec<f64>,
    pub b_o: f64,
}

impl Gradients {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            w_s: Matrix::zeros(d, h),
            w_m: Matrix::zeros(d, h),
            w_g: Matrix::zeros(d, h),
            b_s: vec![0.0; h],
            b_m: vec![0.0; h],
            b_g: vec![0.0; h],
            theta: [0.0; 3],
            w_o: vec![0.0; h],
            b_o: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.iter_mut_with(other) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for (name_idx, _) in TENSOR_NAMES.iter().enumerate() {
            for v in self.tensor_mut(name_idx) {
                *v *= c;
            }
        }
    }

    fn iter_mut_with<'a>(&'a mut self, other: &'a Gradients) -> Vec<(&'a mut f64, f64)> {
        let mut pairs = Vec::new();
        macro_rules! push {
            ($a:expr, $b:expr) => {
                for (x, y) in $a.iter_mut().zip($b.iter()) {
                    pairs.push((x, *y));
                }
            };
        }
        push!(self.w_s.data_mut(), other.w_s.data());
        push!(self.w_m.data_mut(), other.w_m.data());
        push!(self.w_g.data_mut(), other.w_g.data());
        push!(self.b_s, other.b_s);
        push!(self.b_m, other.b_m);
        push!(self.b_g, other.b_g);
        push!(self.theta, other.theta);
        push!(self.w_o, other.w_o);
        pairs.push((&mut self.b_o, other.b_o));
        pairs
    }

    /// Mutable flat view of the tensor at `idx` in [`TENSOR_NAMES`] order.
    pub fn tensor_mut(&mut self, idx: usize) -> &mut [f64] {
        match idx {
            0 => self.w_s.data_mut(),
            1 => self.w_m.data_mut(),
            2 => self.w_g.data_mut(),
            3 => &mut self.b_s,
            4 => &mut self.b_m,
            5 => &mut self.b_g,
            6 => &mut self.theta,
            7 => &mut self.w_o,
            8 => std::slice::from_mut(&mut self.b_o),
            _ => unreachable!(),
        }
    }

    /// Flat view of the tensor at `idx` in [`TENSOR_NAMES`] order.
    pub fn tensor(&self, idx: usize) -> &[f64] {
        match idx {
            0 => self.w_s.data(),
            1 => self.w_m.data(),
            2 => self.w_g.data(),
            3 => &self.b_s,
            4 => &self.b_m,
            5 => &self.b_g,
            6 => &self.theta,
            7 => &self.w_o,
            8 => std::slice::from_ref(&self.b_o),
            _ => unreachable!(),
        }
    }
}

/// Tensor names, in the fixed iteration order shared by params, gradients,
/// and optimizer moments.
pub const TENSOR_NAMES: [&str; 9] = [
    "w_s", "w_m", "w_g", "b_s", "b_m", "b_g", "theta", "w_o", "b_o",
];

impl ModelParams {
    /// Mutable flat view of the tensor at `idx` in [`TENSOR_NAMES`] order.
    pub fn tensor_mut(&mut self, idx: usize) -> &mut [f64] {
        match idx {
            0 => self.w_s.data_mut(),
            1 => self.w_m.data_mut(),
            2 => self.w_g.data_mut(),
            3 => &mut self.b_s,
            4 => &mut self.b_m,
            5 => &mut self.b_g,
            6 => &mut self.theta,
            7 => &mut self.w_o,
            8 => std::slice::from_mut(&mut self.b_o),
            _ => unreachable!(),
        }
    }

    /// Flat view of the tensor at `idx` in [`TENSOR_NAMES`] order.
    pub fn tensor(&self, idx: usize) -> &[f64] {
        match idx {
            0 => self.w_s.data(),
            1 => self.w_m.data(),
            2 => self.w_g.data(),
            3 => &self.b_s,
            4 => &self.b_m,
            5 => &self.b_g,
            6 => &self.theta,
            7 => &self.w_o,
            8 => std::slice::from_ref(&self.b_o),
            _ => unreachable!(),
        }
    }
}

/// Everything computed during a forward pass; kept for the backward pass and
/// for inspection.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub h_s: Matrix,
    pub h_m: Matrix,
    pub h_g: Matrix,
    pub alpha: [f64; 3],
    pub fused: Matrix,
    pub activated: Matrix,
    /// Output-head value per window row; the last entry is `y_hat`.
    pub row_outputs: Vec<f64>,
    pub y_hat: f64,
}

/// Seeded initialization: projection weights uniform on [−1/√d, 1/√d), the
/// output head on [−1/√h, 1/√h), biases and theta zero (so the initial
/// fusion weights are uniform).
pub fn init_params(d: usize, h: usize, seed: u64) -> ModelParams {
    assert!(d >= 1 && h >= 1, "dimensions must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound_in = 1.0 / (d as f64).sqrt();
    let bound_out = 1.0 / (h as f64).sqrt();
    let mut weight = |rows: usize, cols: usize, bound: f64| {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Matrix::new(rows, cols, data).expect("finite init")
    };
    let w_s = weight(d, h, bound_in);
    let w_m = weight(d, h, bound_in);
    let w_g = weight(d, h, bound_in);
    let w_o = (0..h).map(|_| rng.random_range(-bound_out..bound_out)).collect();
    ModelParams {
        w_s,
        w_m,
        w_g,
        b_s: vec![0.0; h],
        b_m: vec![0.0; h],
        b_g: vec![0.0; h],
        theta: [0.0; 3],
        w_o,
        b_o: 0.0,
        input_dim: d,
        hidden_dim: h,
    }
}

/// Numerically stable softmax over the three fusion logits.
pub fn softmax_alpha(theta: &[f64; 3]) -> [f64; 3] {
    let max = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = [
        (theta[0] - max).exp(),
        (theta[1] - max).exp(),
        (theta[2] - max).exp(),
    ];
    let sum: f64 = exps.iter().sum();
    [exps[0] / sum, exps[1] / sum, exps[2] / sum]
}

/// Forward pass over one experiment-mode window. `y_hat` is the output-head
/// value at the last row.
///
/// Processes one window row at a time so every trace matrix is written in a
/// single streaming pass; the cost stays linear in the window length.
pub fn forward(p: &ModelParams, dec: &Decomposition) -> Result<ForwardTrace, ModelError> {
    if dec.mode != DecompositionMode::Experiment {
        return Err(ModelError::WrongMode(dec.mode));
    }
    for comp in [&dec.s, &dec.m, &dec.g] {
        if comp.cols() != p.input_dim || comp.rows() != dec.s.rows() {
            return Err(ModelError::ShapeMismatch {
                got_rows: comp.rows(),
                got_cols: comp.cols(),
                want_rows: dec.s.rows(),
                want_cols: p.input_dim,
            });
        }
    }
    let l = dec.s.rows();
    let d = p.input_dim;
    let h = p.hidden_dim;
    let alpha = softmax_alpha(&p.theta);

    let mut h_s = Matrix::zeros(l, h);
    let mut h_m = Matrix::zeros(l, h);
    let mut h_g = Matrix::zeros(l, h);
    let mut fused = Matrix::zeros(l, h);
    let mut activated = Matrix::zeros(l, h);
    let mut row_outputs = Vec::with_capacity(l);

    let mut branches = [
        (&dec.s, &p.w_s, &p.b_s, &mut h_s),
        (&dec.m, &p.w_m, &p.b_m, &mut h_m),
        (&dec.g, &p.w_g, &p.b_g, &mut h_g),
    ];
    let mut branch_rows = [vec![0.0; h], vec![0.0; h], vec![0.0; h]];
    for r in 0..l {
        for (slot, (input, w, b, _)) in branches.iter().enumerate() {
            let row = &mut branch_rows[slot];
            row.copy_from_slice(b);
            let x_row = input.row(r);
            for (a, &xv) in x_row.iter().enumerate().take(d) {
                if xv == 0.0 {
                    continue;
                }
                let w_row = w.row(a);
                for (j, acc) in row.iter_mut().enumerate() {
                    *acc += xv * w_row[j];
                }
            }
        }
        let mut out = p.b_o;
        for j in 0..h {
            let f = alpha[0] * branch_rows[0][j]
                + alpha[1] * branch_rows[1][j]
                + alpha[2] * branch_rows[2][j];
            fused.set(r, j, f);
            let a = f.max(0.0);
            activated.set(r, j, a);
            out += a * p.w_o[j];
        }
        for (slot, (_, _, _, dest)) in branches.iter_mut().enumerate() {
            for (j, &v) in branch_rows[slot].iter().enumerate() {
                dest.set(r, j, v);
            }
        }
        row_outputs.push(out);
    }
    let y_hat = *row_outputs.last().expect("window has rows");
    Ok(ForwardTrace {
        h_s,
        h_m,
        h_g,
        alpha,
        fused,
        activated,
        row_outputs,
        y_hat,
    })
}

/// Inference-only forward pass: computes the output-head value at every
/// window row without materializing the trace, and returns the last one
/// (the model's prediction). Live state is O(h) regardless of the window
/// length.
pub fn predict(p: &ModelParams, dec: &Decomposition) -> Result<f64, ModelError> {
    if dec.mode != DecompositionMode::Experiment {
        return Err(ModelError::WrongMode(dec.mode));
    }
    for comp in [&dec.s, &dec.m, &dec.g] {
        if comp.cols() != p.input_dim || comp.rows() != dec.s.rows() {
            return Err(ModelError::ShapeMismatch {
                got_rows: comp.rows(),
                got_cols: comp.cols(),
                want_rows: dec.s.rows(),
                want_cols: p.input_dim,
            });
        }
    }
    let l = dec.s.rows();
    let d = p.input_dim;
    let h = p.hidden_dim;
    let alpha = softmax_alpha(&p.theta);
    // Same accumulation order as `forward`, so the two agree bit-for-bit.
    let branches = [
        (&dec.s, &p.w_s, &p.b_s),
        (&dec.m, &p.w_m, &p.b_m),
        (&dec.g, &p.w_g, &p.b_g),
    ];
    let mut branch_rows = [vec![0.0; h], vec![0.0; h], vec![0.0; h]];
    let mut out = p.b_o;
    for r in 0..l {
        for (slot, (input, w, b)) in branches.iter().enumerate() {
            let row = &mut branch_rows[slot];
            row.copy_from_slice(b);
            let x_row = input.row(r);
            for (a, &xv) in x_row.iter().enumerate().take(d) {
                if xv == 0.0 {
                    continue;
                }
                let w_row = w.row(a);
                for (j, acc) in row.iter_mut().enumerate() {
                    *acc += xv * w_row[j];
                }
            }
        }
        out = p.b_o;
        for j in 0..h {
            let f = alpha[0] * branch_rows[0][j]
                + alpha[1] * branch_rows[1][j]
                + alpha[2] * branch_rows[2][j];
            out += f.max(0.0) * p.w_o[j];
        }
    }
    Ok(out)
}

/// Squared-error loss at the last row and its exact gradients.
///
/// The ReLU subgradient at zero is taken as zero. Only the final window row
/// carries loss, so every branch gradient is rank one in the last-row
/// activations.
pub fn backward(
    p: &ModelParams,
    dec: &Decomposition,
    trace: &ForwardTrace,
    target: f64,
) -> (f64, Gradients) {
    let d = p.input_dim;
    let h = p.hidden_dim;
    let last = trace.fused.rows() - 1;
    let residual = trace.y_hat - target;
    let loss = residual * residual;
    let dy = 2.0 * residual;

    let mut grads = Gradients::zeros(d, h);

    // Output head.
    for j in 0..h {
        grads.w_o[j] = dy * trace.activated.get(last, j);
    }
    grads.b_o = dy;

    // Through ReLU into the fused representation (last row only).
    let mut dfused = vec![0.0; h];
    for j in 0..h {
        if trace.fused.get(last, j) > 0.0 {
            dfused[j] = dy * p.w_o[j];
        }
    }

    // Fusion weights via the softmax Jacobian.
    let alpha = trace.alpha;
    let branches = [&trace.h_s, &trace.h_m, &trace.h_g];
    let mut dalpha = [0.0; 3];
    for (i, branch) in branches.iter().enumerate() {
        dalpha[i] = dfused
            .iter()
            .zip(branch.row(last))
            .map(|(df, hv)| df * hv)
            .sum();
    }
    let dot: f64 = (0..3).map(|i| alpha[i] * dalpha[i]).sum();
    for i in 0..3 {
        grads.theta[i] = alpha[i] * (dalpha[i] - dot);
    }

    // Branch projections: dL/dW_i = α_i · x_lastᵀ ⊗ dfused, dL/db_i = α_i · dfused.
    let inputs = [&dec.s, &dec.m, &dec.g];
    for i in 0..3 {
        let x_last = inputs[i].row(last);
        let (gw, gb) = match i {
            0 => (&mut grads.w_s, &mut grads.b_s),
            1 => (&mut grads.w_m, &mut grads.b_m),
            _ => (&mut grads.w_g, &mut grads.b_g),
        };
        for a in 0..d {
            for j in 0..h {
                gw.set(a, j, alpha[i] * x_last[a] * dfused[j]);
            }
        }
        for j in 0..h {
            gb[j] = alpha[i] * dfused[j];
        }
    }

    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::decompose_experiment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a}");
    }

    fn random_decomposition(rng: &mut ChaCha8Rng, l: usize, d: usize) -> Decomposition {
        let data = (0..l * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Matrix::new(l, d, data).unwrap();
        decompose_experiment(&x, 3).unwrap()
    }

    /// Central finite differences through the real forward pass; the oracle
    /// for every analytic gradient below.
    fn numerical_gradients(p: &ModelParams, dec: &Decomposition, target: f64, eps: f64) -> Gradients {
        let d = p.input_dim;
        let h = p.hidden_dim;
        let mut grads = Gradients::zeros(d, h);
        for idx in 0..TENSOR_NAMES.len() {
            for entry in 0..p.tensor(idx).len() {
                let mut plus = p.clone();
                plus.tensor_mut(idx)[entry] += eps;
                let mut minus = p.clone();
                minus.tensor_mut(idx)[entry] -= eps;
                let lp = {
                    let t = forward(&plus, dec).unwrap();
                    (t.y_hat - target).powi(2)
                };
                let lm = {
                    let t = forward(&minus, dec).unwrap();
                    (t.y_hat - target).powi(2)
                };
                grads.tensor_mut(idx)[entry] = (lp - lm) / (2.0 * eps);
            }
        }
        grads
    }

    #[test]
    fn init_gives_uniform_alpha() {
        let p = init_params(3, 4, 0);
        assert_eq!(p.theta, [0.0; 3]);
        let alpha = softmax_alpha(&p.theta);
        for a in alpha {
            assert_close(a, 1.0 / 3.0, 1e-15);
        }
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_params(4, 8, 123), init_params(4, 8, 123));
        assert_ne!(init_params(4, 8, 123), init_params(4, 8, 124));
    }

    #[test]
    fn param_count_formula() {
        let p = init_params(4, 16, 0);
        assert_eq!(p.param_count(), 260);
    }

    #[test]
    fn init_bounds_respected() {
        let p = init_params(4, 8, 7);
        let bound = 1.0 / 2.0;
        for w in [&p.w_s, &p.w_m, &p.w_g] {
            assert!(w.data().iter().all(|v| v.abs() <= bound));
        }
        let out_bound = 1.0 / (8.0f64).sqrt();
        assert!(p.w_o.iter().all(|v| v.abs() <= out_bound));
        assert!(p.b_s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_symmetry_and_shift() {
        let uniform = softmax_alpha(&[0.0, 0.0, 0.0]);
        for a in uniform {
            assert_close(a, 1.0 / 3.0, 1e-15);
        }
        let shifted = softmax_alpha(&[5.5, 5.5, 5.5]);
        for a in shifted {
            assert_close(a, 1.0 / 3.0, 1e-15);
        }
    }

    #[test]
    fn softmax_hand_example() {
        let alpha = softmax_alpha(&[2.0f64.ln(), 0.0, 0.0]);
        assert_close(alpha[0], 0.5, 1e-15);
        assert_close(alpha[1], 0.25, 1e-15);
        assert_close(alpha[2], 0.25, 1e-15);
    }

    #[test]
    fn softmax_shift_invariance_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let theta = [
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ];
            let c = rng.random_range(-10.0..10.0);
            let a = softmax_alpha(&theta);
            let b = softmax_alpha(&[theta[0] + c, theta[1] + c, theta[2] + c]);
            let sum: f64 = a.iter().sum();
            assert_close(sum, 1.0, 1e-12);
            for i in 0..3 {
                assert!(a[i] >= 0.0);
                assert_close(a[i], b[i], 1e-12);
            }
        }
    }

    #[test]
    fn forward_all_zero_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dec = random_decomposition(&mut rng, 5, 2);
        let mut p = init_params(2, 4, 0);
        for idx in 0..TENSOR_NAMES.len() {
            for v in p.tensor_mut(idx) {
                *v = 0.0;
            }
        }
        let trace = forward(&p, &dec).unwrap();
        assert_eq!(trace.y_hat, 0.0);
    }

    #[test]
    fn forward_saturated_alpha_selects_saliency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dec = random_decomposition(&mut rng, 6, 3);
        let mut p = init_params(3, 5, 9);
        p.theta = [20.0, -20.0, -20.0];
        let trace = forward(&p, &dec).unwrap();
        for r in 0..trace.fused.rows() {
            for c in 0..trace.fused.cols() {
                assert_close(trace.fused.get(r, c), trace.h_s.get(r, c), 1e-8);
            }
        }
    }

    #[test]
    fn forward_hand_example_all_ones() {
        let ones = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let dec = Decomposition {
            s: ones.clone(),
            m: ones.clone(),
            g: ones.clone(),
            mode: DecompositionMode::Experiment,
        };
        let p = ModelParams {
            w_s: Matrix::new(1, 1, vec![1.0]).unwrap(),
            w_m: Matrix::new(1, 1, vec![1.0]).unwrap(),
            w_g: Matrix::new(1, 1, vec![1.0]).unwrap(),
            b_s: vec![0.0],
            b_m: vec![0.0],
            b_g: vec![0.0],
            theta: [0.0; 3],
            w_o: vec![1.0],
            b_o: 0.0,
            input_dim: 1,
            hidden_dim: 1,
        };
        let trace = forward(&p, &dec).unwrap();
        assert_close(trace.h_s.get(0, 0), 1.0, 1e-15);
        assert_close(trace.fused.get(1, 0), 1.0, 1e-15);
        assert_close(trace.y_hat, 1.0, 1e-15);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dec = random_decomposition(&mut rng, 5, 2);
        let p = init_params(3, 4, 0);
        assert!(matches!(
            forward(&p, &dec),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn forward_is_symmetric_under_component_permutation() {
        // Swapping (component, projection, logit) triples together leaves the
        // fused sum unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dec = random_decomposition(&mut rng, 6, 2);
        let mut p = init_params(2, 4, 11);
        p.theta = [0.3, -0.7, 1.1];
        let base = forward(&p, &dec).unwrap().y_hat;

        let swapped_dec = Decomposition {
            s: dec.m.clone(),
            m: dec.s.clone(),
            g: dec.g.clone(),
            mode: DecompositionMode::Experiment,
        };
        let mut swapped_p = p.clone();
        std::mem::swap(&mut swapped_p.w_s, &mut swapped_p.w_m);
        std::mem::swap(&mut swapped_p.b_s, &mut swapped_p.b_m);
        swapped_p.theta.swap(0, 1);
        let swapped = forward(&swapped_p, &swapped_dec).unwrap().y_hat;
        assert_close(swapped, base, 1e-12);
    }

    #[test]
    fn backward_zero_at_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dec = random_decomposition(&mut rng, 5, 2);
        let p = init_params(2, 4, 3);
        let trace = forward(&p, &dec).unwrap();
        let (loss, grads) = backward(&p, &dec, &trace, trace.y_hat);
        assert_eq!(loss, 0.0);
        for idx in 0..TENSOR_NAMES.len() {
            assert!(grads.tensor(idx).iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn theta_gradients_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let dec = random_decomposition(&mut rng, 6, 2);
            let mut p = init_params(2, 4, rng.random());
            p.theta = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let trace = forward(&p, &dec).unwrap();
            let (_, grads) = backward(&p, &dec, &trace, 0.7);
            let sum: f64 = grads.theta.iter().sum();
            assert!(sum.abs() < 1e-12, "theta grads must sum to 0, got {sum}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let eps = 1e-5;
        let mut checked = 0;
        let mut attempt = 0u64;
        while checked < 30 {
            attempt += 1;
            let d = rng.random_range(1..=3);
            let h = rng.random_range(1..=6);
            let l = rng.random_range(2..=8);
            let dec = random_decomposition(&mut rng, l, d);
            let mut p = init_params(d, h, 1000 + attempt);
            p.theta = [
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ];
            let trace = forward(&p, &dec).unwrap();
            // Keep the ReLU kink away from the finite-difference stencil.
            let last = trace.fused.rows() - 1;
            if trace.fused.row(last).iter().any(|v| v.abs() < 1e-3) {
                continue;
            }
            let target = rng.random_range(-1.0..1.0);
            let (_, analytic) = backward(&p, &dec, &trace, target);
            let numeric = numerical_gradients(&p, &dec, target, eps);
            for idx in 0..TENSOR_NAMES.len() {
                for (a, n) in analytic.tensor(idx).iter().zip(numeric.tensor(idx)) {
                    let denom = a.abs().max(n.abs()).max(1e-4);
                    let rel = (a - n).abs() / denom;
                    assert!(
                        rel < 1e-4,
                        "{} gradient off: analytic={a}, numeric={n}, rel={rel}",
                        TENSOR_NAMES[idx]
                    );
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn predict_matches_forward_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let d = rng.random_range(1..=4);
            let h = rng.random_range(1..=8);
            let l = rng.random_range(2..=10);
            let dec = random_decomposition(&mut rng, l, d);
            let mut p = init_params(d, h, rng.random());
            p.theta = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let trace = forward(&p, &dec).unwrap();
            let y = predict(&p, &dec).unwrap();
            assert_eq!(y.to_bits(), trace.y_hat.to_bits());
        }
    }

    #[test]
    fn gradient_accumulation_and_scaling() {
        let mut a = Gradients::zeros(2, 3);
        let mut b = Gradients::zeros(2, 3);
        b.theta = [1.0, 2.0, 3.0];
        b.b_o = 4.0;
        a.add_assign(&b);
        a.add_assign(&b);
        a.scale(0.5);
        assert_eq!(a.theta, [1.0, 2.0, 3.0]);
        assert_eq!(a.b_o, 4.0);
    }
}
