//! Small dense linear algebra: Cholesky, preconditioned CG and SVD.
//!
//! Matrices are row-major `Vec<f64>` with an explicit dimension.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the `n × n` matrix `a`. Only the lower triangle is read.
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numerical(alloc::format!(
                    "matrix is not positive definite at pivot {}",
                    j
                )));
            }
            let d = math::sqrt(d);
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    /// Factors `a`, adding a growing multiple of its mean diagonal when the
    /// plain factorization fails.
    pub fn new_shifted(a: &[f64], n: usize) -> Result<Self> {
        if let Ok(c) = Self::new(a, n) {
            return Ok(c);
        }
        let scale = (0..n).map(|i| math::abs(a[i * n + i])).sum::<f64>() / n.max(1) as f64;
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let mut shifted = a.to_vec();
        let mut shift = 1e-12 * scale;
        for _ in 0..12 {
            for i in 0..n {
                shifted[i * n + i] = a[i * n + i] + shift;
            }
            if let Ok(c) = Self::new(&shifted, n) {
                return Ok(c);
            }
            shift *= 10.0;
        }
        Err(Error::Numerical(
            "matrix could not be regularized to positive definite".into(),
        ))
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// Outcome of [`conjugate_gradient`].
#[derive(Debug, Clone)]
pub struct CgResult {
    /// Approximate solution.
    pub x: Vec<f64>,
    /// Iterations performed.
    pub iterations: usize,
    /// Final residual norm relative to `‖b‖`.
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for `A x = b`, with `A` given
/// through `apply(v, out)` and its diagonal.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> CgResult {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return CgResult {
            x,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        rel = norm(&r) / bnorm;
        if rel <= tol {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgResult {
        x,
        iterations,
        relative_residual: rel,
    }
}

/// `Σ a_i b_i`.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ` of a `rows × cols` matrix.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Left singular vectors, `rows × k` row-major with `k = min(rows, cols)`.
    pub u: Vec<f64>,
    /// Singular values in decreasing order.
    pub sigma: Vec<f64>,
    /// Right singular vectors, `cols × k` row-major.
    pub v: Vec<f64>,
    /// Number of rows of `A`.
    pub rows: usize,
    /// Number of columns of `A`.
    pub cols: usize,
}

impl Svd {
    /// One-sided Jacobi SVD.
    pub fn new(a: &[f64], rows: usize, cols: usize) -> Self {
        if rows < cols {
            let mut at = vec![0.0; rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    at[j * rows + i] = a[i * cols + j];
                }
            }
            let t = Self::new(&at, cols, rows);
            return Self {
                u: t.v,
                sigma: t.sigma,
                v: t.u,
                rows,
                cols,
            };
        }
        // rows >= cols: orthogonalize the columns of W = A, accumulating V.
        let (m, n) = (rows, cols);
        let mut w = a.to_vec();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for i in 0..m {
                        let (wp, wq) = (w[i * n + p], w[i * n + q]);
                        alpha += wp * wp;
                        beta += wq * wq;
                        gamma += wp * wq;
                    }
                    if gamma == 0.0 {
                        continue;
                    }
                    off = off.max(math::abs(gamma) / math::sqrt(alpha * beta).max(f64::MIN_POSITIVE));
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                    let t = sign / (math::abs(zeta) + math::hypot(1.0, zeta));
                    let c = 1.0 / math::hypot(1.0, t);
                    let s = c * t;
                    for i in 0..m {
                        let (wp, wq) = (w[i * n + p], w[i * n + q]);
                        w[i * n + p] = c * wp - s * wq;
                        w[i * n + q] = s * wp + c * wq;
                    }
                    for i in 0..n {
                        let (vp, vq) = (v[i * n + p], v[i * n + q]);
                        v[i * n + p] = c * vp - s * vq;
                        v[i * n + q] = s * vp + c * vq;
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        let mut sigma: Vec<f64> = (0..n)
            .map(|j| math::sqrt((0..m).map(|i| w[i * n + j] * w[i * n + j]).sum()))
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
        let mut u = vec![0.0; m * n];
        let mut vs = vec![0.0; n * n];
        for (new, &old) in order.iter().enumerate() {
            let s = sigma[old];
            for i in 0..m {
                u[i * n + new] = if s > 0.0 { w[i * n + old] / s } else { 0.0 };
            }
            for i in 0..n {
                vs[i * n + new] = v[i * n + old];
            }
        }
        sigma = order.iter().map(|&o| sigma[o]).collect();
        Self {
            u,
            sigma,
            v: vs,
            rows,
            cols,
        }
    }

    /// Number of singular values above `rel_tol · σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        self.sigma.iter().filter(|&&s| s > rel_tol * smax && s > 0.0).count()
    }

    /// Column `j` of `U`.
    pub fn left(&self, j: usize) -> Vec<f64> {
        let k = self.sigma.len();
        (0..self.rows).map(|i| self.u[i * k + j]).collect()
    }

    /// Column `j` of `V`.
    pub fn right(&self, j: usize) -> Vec<f64> {
        let k = self.sigma.len();
        (0..self.cols).map(|i| self.v[i * k + j]).collect()
    }
}
