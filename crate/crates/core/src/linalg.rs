//! Minimal dense linear algebra: row-major matrices, products, norms, and a
//! truncated SVD via one-sided Jacobi rotations. No BLAS/LAPACK dependency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sweep cap for the Jacobi SVD.
pub const SVD_MAX_SWEEPS: usize = 1000;
/// Convergence tolerance on the normalized off-diagonal mass of the implicit Gram matrix.
pub const SVD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("invalid shape: {rows}x{cols} requires {expected} values, got {got}")]
    InvalidShape {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("rank {k} out of range, must be within 1..={max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("SVD did not converge within {sweeps} Jacobi sweeps")]
    NotConverged { sweeps: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Dense row-major matrix of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build a matrix from row-major data. Rejects shape/data mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::InvalidShape {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(LinalgError::NonFinite {
                    row: if cols == 0 { 0 } else { i / cols },
                    col: if cols == 0 { 0 } else { i % cols },
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(LinalgError::InvalidShape {
                    rows: r,
                    cols: c,
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col] = value;
    }

    /// Borrow row `r` as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                let o = i * other.cols;
                let b = k * other.cols;
                for j in 0..other.cols {
                    out.data[o + j] += aik * other.data[b + j];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Rows `range.start..range.end` as a new matrix.
    pub fn row_slice(&self, start: usize, end: usize) -> Matrix {
        debug_assert!(start <= end && end <= self.rows);
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// √(Σ xᵢⱼ²)
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Shape and finiteness check, for containers deserialized from disk.
    pub fn validate(&self) -> Result<(), LinalgError> {
        if self.data.len() != self.rows * self.cols {
            return Err(LinalgError::InvalidShape {
                rows: self.rows,
                cols: self.cols,
                expected: self.rows * self.cols,
                got: self.data.len(),
            });
        }
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(LinalgError::NonFinite {
                    row: i / self.cols.max(1),
                    col: i % self.cols.max(1),
                });
            }
        }
        Ok(())
    }
}

/// Leading-`k` singular triplets of a matrix: `x ≈ u * diag(sigma) * vᵀ`.
///
/// `u` is rows×k and `v` is cols×k, both with orthonormal columns; `sigma`
/// is nonincreasing and nonnegative. The largest-magnitude entry of each
/// column of `u` is forced nonnegative so factorizations are deterministic.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
    pub k: usize,
}

impl TruncatedSvd {
    /// `u * diag(sigma) * vᵀ`, the best rank-k approximation in Frobenius norm.
    pub fn reconstruct(&self) -> Matrix {
        let mut out = Matrix::zeros(self.u.rows(), self.v.rows());
        for j in 0..self.k {
            let s = self.sigma[j];
            for r in 0..out.rows() {
                let us = self.u.get(r, j) * s;
                for c in 0..out.cols() {
                    let val = out.get(r, c) + us * self.v.get(c, j);
                    out.set(r, c, val);
                }
            }
        }
        out
    }
}

/// Truncated SVD of `x`, keeping the leading `k` singular triplets.
///
/// One-sided Jacobi on the wider-than-tall orientation: columns are rotated
/// pairwise until the implicit Gram matrix is diagonal to within [`SVD_TOL`],
/// capped at [`SVD_MAX_SWEEPS`] sweeps.
pub fn truncated_svd(x: &Matrix, k: usize) -> Result<TruncatedSvd, LinalgError> {
    let max_k = x.rows().min(x.cols());
    if k == 0 || k > max_k {
        return Err(LinalgError::RankOutOfRange { k, max: max_k });
    }
    let transposed = x.rows() < x.cols();
    let work = if transposed { x.transpose() } else { x.clone() };

    let (u_full, sigma_full, v_full) = jacobi_svd(work)?;

    let (mut u, mut v) = if transposed {
        (v_full, u_full)
    } else {
        (u_full, v_full)
    };
    let mut sigma = sigma_full;
    sigma.truncate(k);
    u = take_columns(&u, k);
    v = take_columns(&v, k);

    // Deterministic sign: largest-magnitude entry of each u column nonnegative.
    for j in 0..k {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..u.rows() {
            let a = u.get(r, j).abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if u.get(best, j) < 0.0 {
            for r in 0..u.rows() {
                let val = -u.get(r, j);
                u.set(r, j, val);
            }
            for r in 0..v.rows() {
                let val = -v.get(r, j);
                v.set(r, j, val);
            }
        }
    }

    Ok(TruncatedSvd { u, sigma, v, k })
}

/// One-sided Jacobi on a tall (rows ≥ cols) matrix.
/// Returns (U rows×cols, sigma len cols, V cols×cols) sorted nonincreasing.
fn jacobi_svd(mut a: Matrix) -> Result<(Matrix, Vec<f64>, Matrix), LinalgError> {
    let m = a.rows();
    let n = a.cols();
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for _sweep in 0..SVD_MAX_SWEEPS {
        let mut max_off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let ap = a.get(i, p);
                    let aq = a.get(i, q);
                    app += ap * ap;
                    aqq += aq * aq;
                    apq += ap * aq;
                }
                if app == 0.0 || aqq == 0.0 {
                    continue;
                }
                let rel = apq.abs() / (app * aqq).sqrt();
                max_off = max_off.max(rel);
                if rel <= SVD_TOL {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if max_off <= SVD_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NotConverged {
            sweeps: SVD_MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| a.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u = Matrix::zeros(m, n);
    let mut v_sorted = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let sigma_max = order.first().map_or(0.0, |&j| norms[j]);
    for (out_j, &src_j) in order.iter().enumerate() {
        let s = norms[src_j];
        sigma.push(s);
        if s > sigma_max * 1e-13 && s > 0.0 {
            for i in 0..m {
                u.set(i, out_j, a.get(i, src_j) / s);
            }
        }
        for i in 0..n {
            v_sorted.set(i, out_j, v.get(i, src_j));
        }
    }

    complete_orthonormal(&mut u, &sigma, sigma_max);
    Ok((u, sigma, v_sorted))
}

/// Replace (numerically) null columns of `u` with vectors orthonormal to the
/// rest, so the factor stays orthonormal even past the matrix rank.
fn complete_orthonormal(u: &mut Matrix, sigma: &[f64], sigma_max: f64) {
    let m = u.rows();
    for j in 0..u.cols() {
        if sigma[j] > sigma_max * 1e-13 && sigma[j] > 0.0 {
            continue;
        }
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for cand in 0..m {
            let mut vec = vec![0.0; m];
            vec[cand] = 1.0;
            for prev in 0..j {
                let dot: f64 = (0..m).map(|i| vec[i] * u.get(i, prev)).sum();
                for (i, entry) in vec.iter_mut().enumerate() {
                    *entry -= dot * u.get(i, prev);
                }
            }
            let norm = vec.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > best_norm {
                best_norm = norm;
                best = Some(vec);
            }
            if norm > 0.9 {
                break;
            }
        }
        if let Some(vec) = best {
            for (i, entry) in vec.iter().enumerate() {
                u.set(i, j, entry / best_norm);
            }
        }
    }
}

fn rotate_columns(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.rows() {
        let ap = a.get(i, p);
        let aq = a.get(i, q);
        a.set(i, p, c * ap - s * aq);
        a.set(i, q, s * ap + c * aq);
    }
}

fn take_columns(m: &Matrix, k: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), k);
    for r in 0..m.rows() {
        for c in 0..k {
            out.set(r, c, m.get(r, c));
        }
    }
    out
}
