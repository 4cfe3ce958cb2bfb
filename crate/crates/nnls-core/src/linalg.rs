//! Dense row-major matrices, small vector helpers, and the Hadamard
//! calculus used by every solver. Everything is plain `f64` with no
//! external numerical dependencies; vectors are ordinary slices.

use crate::error::{NnlsError, Result};

/// Dense real matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(NnlsError::dim(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(NnlsError::dim(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NnlsError::Validation(format!(
                "matrix entry {pos} is not finite"
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix entry by entry; `f(i, j)` must return finite values.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(NnlsError::dim(format!(
                "matvec: vector length {} does not match {} columns",
                x.len(),
                self.cols
            )));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        Ok(out)
    }

    /// `A^T v`.
    pub fn matvec_t(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(NnlsError::dim(format!(
                "matvec_t: vector length {} does not match {} rows",
                v.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub(crate) fn matvec_t_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), out);
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `A^T A`, exactly symmetric by construction.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, &rj) in row.iter().enumerate() {
                if rj == 0.0 {
                    continue;
                }
                for (k, &rk) in row.iter().enumerate().skip(j) {
                    g.data[j * n + k] += rj * rk;
                }
            }
        }
        for j in 0..n {
            for k in (j + 1)..n {
                g.data[k * n + j] = g.data[j * n + k];
            }
        }
        g
    }

    /// Rescales every column to unit Euclidean norm; zero columns are kept.
    pub fn normalize_columns(&mut self) {
        for j in 0..self.cols {
            let mut s = 0.0;
            for i in 0..self.rows {
                let v = self.data[i * self.cols + j];
                s += v * v;
            }
            if s > 0.0 {
                let inv = 1.0 / s.sqrt();
                for i in 0..self.rows {
                    self.data[i * self.cols + j] *= inv;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

// Four independent accumulator lanes: still a fixed deterministic
// summation order, but with enough instruction-level parallelism for the
// compiler to keep the FP units busy.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0_f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

pub fn norm2(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn min_entry(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Entrywise product.
pub fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Entrywise power `x^{.p}` with integer exponent `p >= 1`.
pub fn hadamard_pow(x: &[f64], p: u32) -> Vec<f64> {
    debug_assert!(p >= 1);
    x.iter().map(|v| v.powi(p as i32)).collect()
}

pub(crate) fn hadamard_pow_into(x: &[f64], p: u32, out: &mut [f64]) {
    debug_assert!(p >= 1);
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v.powi(p as i32);
    }
}

pub fn clamp_nonneg(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Outcome of a power-iteration spectral norm estimate.
#[derive(Debug, Clone, Copy)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `||A^T A||_2` by power iteration, started from the normalized all-ones
/// vector so the estimate is deterministic. Returns the best estimate with
/// `converged = false` when `max_iter` is exhausted; an all-zero matrix
/// yields 0.
pub fn gram_spectral_norm(a: &DenseMatrix, tol: f64, max_iter: usize) -> Result<SpectralEstimate> {
    if tol <= 0.0 {
        return Err(NnlsError::domain("gram_spectral_norm: tol must be > 0"));
    }
    let n = a.cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; a.rows()];
    let mut w = vec![0.0; n];
    let mut lambda_prev = 0.0;
    for k in 1..=max_iter {
        a.matvec_into(&v, &mut av);
        a.matvec_t_into(&av, &mut w);
        let lambda = dot(&v, &w); // Rayleigh quotient, ||v|| = 1
        let wn = norm2(&w);
        if wn == 0.0 {
            return Ok(SpectralEstimate {
                value: 0.0,
                converged: true,
                iterations: k,
            });
        }
        for (vi, &wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if (lambda - lambda_prev).abs() <= tol * lambda.abs() {
            return Ok(SpectralEstimate {
                value: lambda,
                converged: true,
                iterations: k,
            });
        }
        lambda_prev = lambda;
    }
    Ok(SpectralEstimate {
        value: lambda_prev,
        converged: false,
        iterations: max_iter,
    })
}

/// `||H||_2` for symmetric `H` (possibly indefinite) by power iteration
/// with the same deterministic start as [`gram_spectral_norm`].
pub fn spectral_norm_symmetric(h: &DenseMatrix, tol: f64, max_iter: usize) -> SpectralEstimate {
    let n = h.cols();
    debug_assert_eq!(h.rows(), n);
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut lambda_prev = 0.0;
    for k in 1..=max_iter {
        h.matvec_into(&v, &mut w);
        let lambda = dot(&v, &w).abs();
        let wn = norm2(&w);
        if wn == 0.0 {
            return SpectralEstimate {
                value: 0.0,
                converged: true,
                iterations: k,
            };
        }
        for (vi, &wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if (lambda - lambda_prev).abs() <= tol * lambda.abs() {
            return SpectralEstimate {
                value: lambda,
                converged: true,
                iterations: k,
            };
        }
        lambda_prev = lambda;
    }
    SpectralEstimate {
        value: lambda_prev,
        converged: false,
        iterations: max_iter,
    }
}

/// Solves `G z = b` for symmetric positive-definite `G` via Cholesky.
/// Returns `None` when a pivot drops below `eps * max_diag`, which the
/// active-set solver treats as rank deficiency.
pub fn cholesky_solve(g: &DenseMatrix, b: &[f64], eps: f64) -> Option<Vec<f64>> {
    let n = g.cols();
    debug_assert_eq!(g.rows(), n);
    debug_assert_eq!(b.len(), n);
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(g.get(i, i)));
    let floor = eps * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= floor {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward then backward substitution
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[i * n + k] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            z[i] -= l[k * n + i] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    Some(z)
}

/// Diagonally pivoted semidefinite solve for `G z = b`: coordinates whose
/// remaining pivot falls below `eps * max_diag` are frozen at zero, which
/// yields a least-squares solution supported on a well-conditioned subset.
/// Returns the solution and whether any coordinate was dropped.
pub fn pivoted_semidefinite_solve(g: &DenseMatrix, b: &[f64], eps: f64) -> (Vec<f64>, bool) {
    let n = g.cols();
    let mut active: Vec<usize> = (0..n).collect();
    loop {
        if active.is_empty() {
            return (vec![0.0; n], true);
        }
        let sub = DenseMatrix::from_fn(active.len(), active.len(), |i, j| {
            g.get(active[i], active[j])
        });
        let rhs: Vec<f64> = active.iter().map(|&i| b[i]).collect();
        if let Some(z_sub) = cholesky_solve(&sub, &rhs, eps) {
            let mut z = vec![0.0; n];
            for (slot, &i) in active.iter().enumerate() {
                z[i] = z_sub[slot];
            }
            return (z, active.len() < n);
        }
        // drop the coordinate with the smallest diagonal and retry
        let (drop_slot, _) = active
            .iter()
            .enumerate()
            .map(|(slot, &i)| (slot, g.get(i, i)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("active set is nonempty");
        active.remove(drop_slot);
    }
}
