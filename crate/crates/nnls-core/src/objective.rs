//! Losses, gradients, Bregman machinery, KKT residuals, and the
//! closed-form initialization bounds.
//!
//! Conventions used throughout:
//! - `nnls_objective` is the unhalved `||Az - y||^2`.
//! - `reduced_loss` is `1/2 ||A x^{.L} - y||^2`.
//! - `flow_field` is `g(x) = [A^T (A x^{.L} - y)] .* x^{.(L-1)}`, the
//!   per-factor gradient under identical factors. The full gradient of
//!   `reduced_loss` is `L * g(x)`; the Hessian returned by
//!   `reduced_hessian` is the Jacobian of `L * g(x)`. Tests pin this
//!   factor-L relationship explicitly.

use crate::error::{NnlsError, Result};
use crate::linalg::{self, DenseMatrix};

/// Default tolerance at which KKT reports are certified.
pub const DEFAULT_KKT_TOL: f64 = 1e-8;

/// KKT residuals for `min_{z >= 0} ||Az - y||^2` at a point `x`.
///
/// The dual vector is `w* = A^T (y - Ax)`. Indices with `x_i <= tol` form
/// the active set, where optimality requires `w*_i <= 0`; on the passive
/// set it requires `w*_i = 0`; complementarity requires `x_i w*_i = 0`.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub primal_violation: f64,
    pub dual_violation: f64,
    pub complementarity: f64,
    pub dual_vector: Vec<f64>,
    pub tol: f64,
}

impl KktReport {
    /// The point is certified optimal iff all three residuals are within tol.
    pub fn is_optimal(&self) -> bool {
        self.primal_violation <= self.tol
            && self.dual_violation <= self.tol
            && self.complementarity <= self.tol
    }

    pub fn max_violation(&self) -> f64 {
        self.primal_violation
            .max(self.dual_violation)
            .max(self.complementarity)
    }
}

fn check_dims(a: &DenseMatrix, y: &[f64], x: &[f64]) -> Result<()> {
    if y.len() != a.rows() {
        return Err(NnlsError::dim(format!(
            "y has length {} but A has {} rows",
            y.len(),
            a.rows()
        )));
    }
    if x.len() != a.cols() {
        return Err(NnlsError::dim(format!(
            "x has length {} but A has {} columns",
            x.len(),
            a.cols()
        )));
    }
    Ok(())
}

fn check_layers(layers: u32) -> Result<()> {
    if layers < 2 {
        return Err(NnlsError::domain(format!(
            "layers must be >= 2, got {layers}"
        )));
    }
    Ok(())
}

/// `||Az - y||^2`, the quantity minimized by NNLS.
pub fn nnls_objective(a: &DenseMatrix, y: &[f64], z: &[f64]) -> Result<f64> {
    check_dims(a, y, z)?;
    let az = a.matvec(z)?;
    Ok(az.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum())
}

/// `1/2 ||A x^{.L} - y||^2`, the single-vector loss under identical factors.
pub fn reduced_loss(a: &DenseMatrix, y: &[f64], x: &[f64], layers: u32) -> Result<f64> {
    check_layers(layers)?;
    let xt = linalg::hadamard_pow(x, layers);
    Ok(0.5 * nnls_objective(a, y, &xt)?)
}

/// `g(x) = [A^T (A x^{.L} - y)] .* x^{.(L-1)}`.
///
/// The gradient flow is `x'(t) = -g(x(t))`, and `g` equals the gradient of
/// the overparametrized loss with respect to any single factor when all
/// factors are identical.
pub fn flow_field(a: &DenseMatrix, y: &[f64], x: &[f64], layers: u32) -> Result<Vec<f64>> {
    check_layers(layers)?;
    check_dims(a, y, x)?;
    let mut out = vec![0.0; x.len()];
    let mut ws = FlowWorkspace::new(a.rows(), a.cols());
    flow_field_into(a, y, x, layers, &mut ws, &mut out);
    Ok(out)
}

/// Reusable buffers for repeated flow-field evaluations.
pub(crate) struct FlowWorkspace {
    pub xt: Vec<f64>,
    pub residual: Vec<f64>,
    pub s: Vec<f64>,
}

impl FlowWorkspace {
    pub fn new(m: usize, n: usize) -> Self {
        FlowWorkspace {
            xt: vec![0.0; n],
            residual: vec![0.0; m],
            s: vec![0.0; n],
        }
    }
}

pub(crate) fn flow_field_into(
    a: &DenseMatrix,
    y: &[f64],
    x: &[f64],
    layers: u32,
    ws: &mut FlowWorkspace,
    out: &mut [f64],
) {
    linalg::hadamard_pow_into(x, layers, &mut ws.xt);
    a.matvec_into(&ws.xt, &mut ws.residual);
    for (r, &yi) in ws.residual.iter_mut().zip(y) {
        *r -= yi;
    }
    a.matvec_t_into(&ws.residual, &mut ws.s);
    for ((o, &si), &xi) in out.iter_mut().zip(&ws.s).zip(x) {
        *o = si * xi.powi(layers as i32 - 1);
    }
}

/// Per-factor gradients of the overparametrized loss
/// `1/2 ||A (x^(1) .* ... .* x^(L)) - y||^2`. The shared term
/// `A^T (A x~ - y)` is evaluated once.
pub fn overparam_gradients(
    a: &DenseMatrix,
    y: &[f64],
    factors: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if factors.len() < 2 {
        return Err(NnlsError::domain(format!(
            "need at least 2 factors, got {}",
            factors.len()
        )));
    }
    let n = a.cols();
    for (k, f) in factors.iter().enumerate() {
        if f.len() != n {
            return Err(NnlsError::dim(format!(
                "factor {k} has length {} but A has {n} columns",
                f.len()
            )));
        }
    }
    let mut xt = vec![1.0; n];
    for f in factors {
        for (t, &v) in xt.iter_mut().zip(f) {
            *t *= v;
        }
    }
    check_dims(a, y, &xt)?;
    let az = a.matvec(&xt)?;
    let residual: Vec<f64> = az.iter().zip(y).map(|(p, q)| p - q).collect();
    let s = a.matvec_t(&residual)?;
    let mut grads = Vec::with_capacity(factors.len());
    for skip in 0..factors.len() {
        let mut prod = vec![1.0; n];
        for (k, f) in factors.iter().enumerate() {
            if k == skip {
                continue;
            }
            for (p, &v) in prod.iter_mut().zip(f) {
                *p *= v;
            }
        }
        for (p, &si) in prod.iter_mut().zip(&s) {
            *p *= si;
        }
        grads.push(prod);
    }
    Ok(grads)
}

/// Hessian of the reduced loss (equivalently the Jacobian of
/// `L * flow_field`):
/// `L^2 A^T A .* [x^{.(L-1)} (x^{.(L-1)})^T]
///  + L (L-1) diag(A^T (A x^{.L} - y) .* x^{.(L-2)})`.
/// For `L = 2` the `x^{.(L-2)}` factor is the all-ones vector.
pub fn reduced_hessian(a: &DenseMatrix, y: &[f64], x: &[f64], layers: u32) -> Result<DenseMatrix> {
    check_layers(layers)?;
    check_dims(a, y, x)?;
    let gram = a.gram();
    Ok(reduced_hessian_from_gram(&gram, a, y, x, layers))
}

/// Same as [`reduced_hessian`] but reuses a precomputed Gram matrix
/// `A^T A`, which solvers refresh-heavy stepsize rules rely on.
pub(crate) fn reduced_hessian_from_gram(
    gram: &DenseMatrix,
    a: &DenseMatrix,
    y: &[f64],
    x: &[f64],
    layers: u32,
) -> DenseMatrix {
    let n = a.cols();
    let l = layers as f64;
    let xl1 = linalg::hadamard_pow(x, layers - 1);
    let xt = linalg::hadamard_pow(x, layers);
    let mut residual = vec![0.0; a.rows()];
    a.matvec_into(&xt, &mut residual);
    for (r, &yi) in residual.iter_mut().zip(y) {
        *r -= yi;
    }
    let mut s = vec![0.0; n];
    a.matvec_t_into(&residual, &mut s);
    let mut h = DenseMatrix::from_fn(n, n, |i, j| l * l * gram.get(i, j) * xl1[i] * xl1[j]);
    let data = h.data_mut();
    for i in 0..n {
        let xl2 = if layers == 2 { 1.0 } else { x[i].powi(layers as i32 - 2) };
        data[i * n + i] += l * (l - 1.0) * s[i] * xl2;
    }
    h
}

/// The layer-dependent potential behind the Bregman diagnostics:
/// `F(x) = 1/2 sum(x_n log x_n - x_n)` for `L = 2` (with `0 log 0 := 0`)
/// and `F(x) = L/(2(2-L)) sum x_n^{2/L}` for `L > 2`.
pub fn bregman_potential(x: &[f64], layers: u32) -> Result<f64> {
    check_layers(layers)?;
    if let Some(pos) = x.iter().position(|&v| v < 0.0) {
        return Err(NnlsError::domain(format!(
            "bregman_potential: entry {pos} is negative"
        )));
    }
    if layers == 2 {
        let s: f64 = x
            .iter()
            .map(|&v| if v == 0.0 { 0.0 } else { v * v.ln() - v })
            .sum();
        Ok(0.5 * s)
    } else {
        let l = layers as f64;
        let s: f64 = x.iter().map(|&v| v.powf(2.0 / l)).sum();
        Ok(l / (2.0 * (2.0 - l)) * s)
    }
}

fn bregman_grad_entry(q: f64, layers: u32) -> f64 {
    if layers == 2 {
        0.5 * q.ln()
    } else {
        let l = layers as f64;
        q.powf(2.0 / l - 1.0) / (2.0 - l)
    }
}

/// `D_F(p, q) = F(p) - F(q) - <grad F(q), p - q>`; nonnegative, zero iff
/// `p == q`. Requires `p >= 0` and `q > 0` (the gradient of `F` is
/// undefined at the boundary).
pub fn bregman_divergence(p: &[f64], q: &[f64], layers: u32) -> Result<f64> {
    check_layers(layers)?;
    if p.len() != q.len() {
        return Err(NnlsError::dim(format!(
            "bregman_divergence: lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if let Some(pos) = q.iter().position(|&v| v <= 0.0) {
        return Err(NnlsError::domain(format!(
            "bregman_divergence: q entry {pos} is not strictly positive"
        )));
    }
    let fp = bregman_potential(p, layers)?;
    let fq = bregman_potential(q, layers)?;
    let inner: f64 = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| bregman_grad_entry(qi, layers) * (pi - qi))
        .sum();
    Ok(fp - fq - inner)
}

/// Evaluates the KKT residuals at `x` with active set `{i : x_i <= tol}`.
pub fn kkt_check(a: &DenseMatrix, y: &[f64], x: &[f64], tol: f64) -> Result<KktReport> {
    if tol <= 0.0 {
        return Err(NnlsError::domain("kkt_check: tol must be > 0"));
    }
    check_dims(a, y, x)?;
    let ax = a.matvec(x)?;
    let neg_residual: Vec<f64> = y.iter().zip(&ax).map(|(yi, ai)| yi - ai).collect();
    let w = a.matvec_t(&neg_residual)?;
    let primal_violation = (-linalg::min_entry(x)).max(0.0);
    let mut dual_violation = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for (&xi, &wi) in x.iter().zip(&w) {
        if xi <= tol {
            dual_violation = dual_violation.max(wi.max(0.0));
        } else {
            dual_violation = dual_violation.max(wi.abs());
        }
        complementarity = complementarity.max((xi * wi).abs());
    }
    Ok(KktReport {
        primal_violation,
        dual_violation,
        complementarity,
        dual_vector: w,
        tol,
    })
}

/// The initialization bound `h(Q_+, eps)` guaranteeing an eps-accurate
/// l1 bias of the gradient-flow limit:
/// `exp(-1/2 - (Q_+^2 + N e^{-1}) / (2 eps))` for `L = 2` and
/// `(2 eps / (L (Q_+ + N + eps)))^{1/(L-2)}` for `L > 2`.
pub fn alpha_bound(q_plus: f64, epsilon: f64, layers: u32, n: usize) -> Result<f64> {
    check_layers(layers)?;
    if epsilon <= 0.0 {
        return Err(NnlsError::domain("alpha_bound: epsilon must be > 0"));
    }
    if q_plus < 0.0 {
        return Err(NnlsError::domain("alpha_bound: Q_+ must be >= 0"));
    }
    let nf = n as f64;
    if layers == 2 {
        Ok((-0.5 - (q_plus * q_plus + nf * (-1.0_f64).exp()) / (2.0 * epsilon)).exp())
    } else {
        let l = layers as f64;
        Ok((2.0 * epsilon / (l * (q_plus + nf + epsilon))).powf(1.0 / (l - 2.0)))
    }
}

/// Initialization vector `x0 = exp(-1/2 (1 + theta w))` producing an
/// approximate weighted-l1 bias for weights `w` in `(0, 1]^N` with
/// `||w||_inf = 1`.
pub fn weighted_init(w: &[f64], theta: f64) -> Result<Vec<f64>> {
    if theta <= 0.0 {
        return Err(NnlsError::domain("weighted_init: theta must be > 0"));
    }
    if w.is_empty() {
        return Err(NnlsError::domain("weighted_init: w must be nonempty"));
    }
    let mut max = 0.0_f64;
    for (i, &wi) in w.iter().enumerate() {
        if !(wi > 0.0 && wi <= 1.0) {
            return Err(NnlsError::domain(format!(
                "weighted_init: w[{i}] = {wi} is outside (0, 1]"
            )));
        }
        max = max.max(wi);
    }
    if (max - 1.0).abs() > 1e-12 {
        return Err(NnlsError::domain(format!(
            "weighted_init: ||w||_inf = {max} but must equal 1"
        )));
    }
    Ok(w.iter().map(|&wi| (-0.5 * (1.0 + theta * wi)).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
        DenseMatrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn objective_exact_fit() {
        let a = DenseMatrix::identity(2);
        assert_eq!(nnls_objective(&a, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn objective_forced_arithmetic() {
        let a = DenseMatrix::identity(2);
        assert_eq!(nnls_objective(&a, &[1.0, 1.0], &[0.0, 0.0]).unwrap(), 2.0);
        let a = mat(2, 1, &[1.0, 1.0]);
        assert_eq!(nnls_objective(&a, &[1.0, 3.0], &[2.0]).unwrap(), 2.0);
    }

    #[test]
    fn reduced_loss_cases() {
        let a = mat(1, 1, &[1.0]);
        assert_eq!(reduced_loss(&a, &[4.0], &[2.0], 2).unwrap(), 0.0);
        assert_eq!(reduced_loss(&a, &[0.0], &[1.0], 3).unwrap(), 0.5);
        let i2 = DenseMatrix::identity(2);
        assert_eq!(reduced_loss(&i2, &[1.0, 1.0], &[0.0, 0.0], 2).unwrap(), 1.0);
    }

    #[test]
    fn flow_field_cases() {
        let a = mat(1, 1, &[1.0]);
        assert_eq!(flow_field(&a, &[4.0], &[2.0], 2).unwrap(), vec![0.0]);
        assert_eq!(flow_field(&a, &[0.0], &[2.0], 2).unwrap(), vec![8.0]);
        let i2 = DenseMatrix::identity(2);
        assert_eq!(
            flow_field(&i2, &[3.0, -1.0], &[0.0, 0.0], 4).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn flow_rejects_single_layer() {
        let a = mat(1, 1, &[1.0]);
        assert!(matches!(
            flow_field(&a, &[0.0], &[1.0], 1),
            Err(NnlsError::Domain(_))
        ));
    }

    #[test]
    fn overparam_reduces_to_flow_for_identical_factors() {
        let a = mat(2, 3, &[1.0, -2.0, 0.5, 0.0, 1.5, -1.0]);
        let y = [0.3, -0.7];
        let x = vec![0.4, 1.2, 0.9];
        let grads = overparam_gradients(&a, &y, &[x.clone(), x.clone(), x.clone()]).unwrap();
        let flow = flow_field(&a, &y, &x, 3).unwrap();
        for g in &grads {
            for (gi, fi) in g.iter().zip(&flow) {
                assert!((gi - fi).abs() <= 1e-12 * fi.abs().max(1.0));
            }
        }
    }

    #[test]
    fn overparam_forced_arithmetic() {
        let a = mat(1, 1, &[1.0]);
        let grads = overparam_gradients(&a, &[0.0], &[vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(grads[0], vec![18.0]);
        assert_eq!(grads[1], vec![12.0]);
    }

    #[test]
    fn hessian_scalar_cases() {
        let a = mat(1, 1, &[1.0]);
        let h = reduced_hessian(&a, &[0.0], &[2.0], 2).unwrap();
        assert_eq!(h.get(0, 0), 24.0);
        let h = reduced_hessian(&a, &[4.0], &[2.0], 2).unwrap();
        assert_eq!(h.get(0, 0), 16.0);
    }

    #[test]
    fn bregman_potential_cases() {
        assert!((bregman_potential(&[1.0], 2).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(bregman_potential(&[0.0, 0.0], 2).unwrap(), 0.0);
        assert!((bregman_potential(&[4.0], 4).unwrap() + 2.0).abs() < 1e-15);
    }

    #[test]
    fn bregman_potential_rejects_negative() {
        assert!(matches!(
            bregman_potential(&[-0.1], 2),
            Err(NnlsError::Domain(_))
        ));
    }

    #[test]
    fn bregman_divergence_cases() {
        for layers in [2_u32, 3, 5] {
            let p = [0.7, 1.3];
            assert_eq!(bregman_divergence(&p, &p, layers).unwrap(), 0.0);
        }
        let e = std::f64::consts::E;
        let d = bregman_divergence(&[1.0], &[e], 2).unwrap();
        assert!((d - (e / 2.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn bregman_divergence_rejects_boundary_q() {
        assert!(matches!(
            bregman_divergence(&[1.0], &[0.0], 2),
            Err(NnlsError::Domain(_))
        ));
    }

    #[test]
    fn kkt_clamped_projection_is_optimal() {
        let a = DenseMatrix::identity(2);
        let report = kkt_check(&a, &[1.0, -1.0], &[1.0, 0.0], 1e-10).unwrap();
        assert_eq!(report.dual_vector, vec![0.0, -1.0]);
        assert_eq!(report.max_violation(), 0.0);
        assert!(report.is_optimal());
    }

    #[test]
    fn kkt_flags_suboptimal_zero() {
        let a = DenseMatrix::identity(2);
        let report = kkt_check(&a, &[1.0, 1.0], &[0.0, 0.0], 1e-10).unwrap();
        assert_eq!(report.dual_violation, 1.0);
        assert!(!report.is_optimal());
    }

    #[test]
    fn alpha_bound_spot_values() {
        let b = alpha_bound(1.0, 1.0, 3, 2).unwrap();
        assert!((b - 2.0 / 12.0).abs() < 1e-15);
        let b = alpha_bound(0.0, (-1.0_f64).exp(), 2, 1).unwrap();
        assert!((b - (-1.0_f64).exp()).abs() < 1e-15);
        let b = alpha_bound(0.0, 1.0, 4, 1).unwrap();
        assert!((b - 0.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_bound_two_layer_cap() {
        // appendix variant is automatically <= e^{-1/2}
        for (q, eps, n) in [(0.0, 10.0, 1), (3.0, 0.5, 7), (0.1, 100.0, 50)] {
            let b = alpha_bound(q, eps, 2, n).unwrap();
            assert!(b <= (-0.5_f64).exp() + 1e-15);
        }
    }

    #[test]
    fn weighted_init_spot_values() {
        let x0 = weighted_init(&[1.0, 1.0], 1.0).unwrap();
        let e1 = (-1.0_f64).exp();
        assert!((x0[0] - e1).abs() < 1e-15 && (x0[1] - e1).abs() < 1e-15);
        let x0 = weighted_init(&[1.0, 0.5], 2.0).unwrap();
        assert!((x0[0] - (-1.5_f64).exp()).abs() < 1e-15);
        assert!((x0[1] - e1).abs() < 1e-15);
    }

    #[test]
    fn weighted_init_validates_weights() {
        assert!(matches!(
            weighted_init(&[0.5, 0.5], 1.0),
            Err(NnlsError::Domain(_))
        ));
        assert!(matches!(
            weighted_init(&[1.0, 0.0], 1.0),
            Err(NnlsError::Domain(_))
        ));
        assert!(matches!(
            weighted_init(&[1.0], 0.0),
            Err(NnlsError::Domain(_))
        ));
    }
}
