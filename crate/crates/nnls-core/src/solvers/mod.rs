//! Iterative solvers: factorized gradient descent and its stochastic
//! variant, an RK4 integrator for the exact gradient flow, projected
//! gradient descent, and a Lawson-Hanson active-set reference, plus the
//! stepsize rules they share.

mod descent;
mod flow;
mod lawson_hanson;
mod pgd;

pub use descent::{solve_gd, solve_sgd};
pub use flow::solve_flow_rk4;
pub use lawson_hanson::solve_lawson_hanson;
pub use pgd::solve_pgd;

use crate::error::{NnlsError, Result};
use crate::linalg::{self, DenseMatrix};
use crate::objective::{self, KktReport};
use crate::problem::NnlsProblem;

/// Stepsize fallback used when an adaptive rule cannot produce a value
/// (BB at the first iterate, a vanishing Hessian norm, ...).
pub const DEFAULT_ETA: f64 = 1e-2;

/// Denominator threshold below which the BB ratio is treated as underflow.
pub const BB_DENOMINATOR_FLOOR: f64 = 1e-30;

/// Stepsize selection for the iterative solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    /// Fixed stepsize.
    Constant { eta: f64 },
    /// Barzilai-Borwein secant ratio on the reduced iterate; `eta0` is
    /// used at the first step and whenever the ratio is unavailable.
    BarzilaiBorwein { eta0: f64 },
    /// `eta = 1 / ||hessian||_2`, recomputed every `refresh_every` steps.
    LipschitzOracle { refresh_every: u64 },
    /// Nesterov momentum `beta_t = (t-1)/(t+2)` around a constant stepsize.
    NesterovConstant { eta: f64 },
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Constant { eta } | StepRule::NesterovConstant { eta } => {
                if eta <= 0.0 {
                    return Err(NnlsError::domain(format!("stepsize eta = {eta} must be > 0")));
                }
            }
            StepRule::BarzilaiBorwein { eta0 } => {
                if eta0 <= 0.0 {
                    return Err(NnlsError::domain(format!("eta0 = {eta0} must be > 0")));
                }
            }
            StepRule::LipschitzOracle { refresh_every } => {
                if refresh_every == 0 {
                    return Err(NnlsError::domain("refresh_every must be >= 1"));
                }
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match *self {
            StepRule::Constant { eta } => format!("const:{eta}"),
            StepRule::BarzilaiBorwein { eta0 } => format!("bb:{eta0}"),
            StepRule::LipschitzOracle { refresh_every } => format!("lipschitz:{refresh_every}"),
            StepRule::NesterovConstant { eta } => format!("nesterov:{eta}"),
        }
    }
}

/// Configuration for the factorized descent solvers.
///
/// `grad_tol` and `objective_tol` set to zero disable the corresponding
/// stopping rule; the objective-plateau rule compares the objective
/// between consecutive trace points (a window of `trace_every` steps).
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub layers: u32,
    pub init: Vec<f64>,
    pub step_rule: StepRule,
    pub max_iters: u64,
    pub grad_tol: f64,
    pub objective_tol: f64,
    pub trace_every: u64,
    /// SGD only: RNG seed for batch sampling.
    pub seed: u64,
    /// SGD only: rows per batch; defaults to `ceil(M / 10)`.
    pub batch_size: Option<usize>,
}

impl SolverConfig {
    /// Paper-default configuration: three layers, `x0 = 0.01 * 1`,
    /// constant stepsize 0.01.
    pub fn default_for(n: usize) -> Self {
        SolverConfig {
            layers: 3,
            init: vec![DEFAULT_ETA; n],
            step_rule: StepRule::Constant { eta: DEFAULT_ETA },
            max_iters: 1_000_000,
            grad_tol: 1e-10,
            objective_tol: 1e-12,
            trace_every: 100,
            seed: 0,
            batch_size: None,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.init = vec![alpha; self.init.len()];
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.layers < 2 {
            return Err(NnlsError::domain(format!(
                "layers must be >= 2, got {}",
                self.layers
            )));
        }
        if self.init.len() != n {
            return Err(NnlsError::dim(format!(
                "init has length {} but the problem has {n} columns",
                self.init.len()
            )));
        }
        if let Some(pos) = self.init.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(NnlsError::domain(format!(
                "init[{pos}] = {} must be strictly positive",
                self.init[pos]
            )));
        }
        if self.max_iters == 0 {
            return Err(NnlsError::domain("max_iters must be >= 1"));
        }
        if self.trace_every == 0 {
            return Err(NnlsError::domain("trace_every must be >= 1"));
        }
        if self.grad_tol < 0.0 || self.objective_tol < 0.0 {
            return Err(NnlsError::domain("tolerances must be >= 0"));
        }
        self.step_rule.validate()
    }
}

/// Why a solver stopped.
///
/// `SignFlipDetected` exists so reports can name the event; the vanilla
/// descent solvers never clamp or stop on sign flips, they only count
/// them in [`SolveReport::sign_flips`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradTol,
    ObjectiveTol,
    MaxIters,
    SignFlipDetected,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::GradTol => "grad-tol",
            StopReason::ObjectiveTol => "objective-tol",
            StopReason::MaxIters => "max-iters",
            StopReason::SignFlipDetected => "sign-flip",
        };
        f.write_str(s)
    }
}

impl StopReason {
    pub fn parse(s: &str) -> Option<StopReason> {
        match s {
            "grad-tol" => Some(StopReason::GradTol),
            "objective-tol" => Some(StopReason::ObjectiveTol),
            "max-iters" => Some(StopReason::MaxIters),
            "sign-flip" => Some(StopReason::SignFlipDetected),
            _ => None,
        }
    }
}

/// One sampled point of a solver run. Fields that do not apply carry NaN
/// (`residual_yplus_sq` without a supplied projection, `bregman_ref`
/// without a reference solution, `stepsize` for the active-set solver).
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub iter: u64,
    pub objective: f64,
    pub residual_yplus_sq: f64,
    pub bregman_ref: f64,
    pub l1_norm: f64,
    pub min_entry: f64,
    pub stepsize: f64,
    pub wall_seconds: f64,
}

/// Result of a solver run. For the factorized solvers `x_final` is the
/// product iterate `x~ = x^{.L}`; for PGD and Lawson-Hanson it is the raw
/// iterate. `objective_final` is always recomputed as `||A x_final - y||^2`.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x_final: Vec<f64>,
    pub objective_final: f64,
    pub iterations: u64,
    pub stop_reason: StopReason,
    pub kkt: KktReport,
    pub trace: Vec<TracePoint>,
    /// Number of factor entries that changed sign between consecutive
    /// iterates (only possible for odd L; reported, never acted upon).
    pub sign_flips: u64,
    /// Whether the active-set solver fell back to a pivoted solve on a
    /// rank-deficient passive subproblem.
    pub rank_fallback: bool,
}

/// Barzilai-Borwein ratio `||x_t - x_prev||^2 / ||A (x_t - x_prev)||^2`.
///
/// Returns `None` (the fallback signal) when the iterates coincide or the
/// denominator underflows below [`BB_DENOMINATOR_FLOOR`]; callers then use
/// their configured `eta0`.
pub fn bb_stepsize(x_t: &[f64], x_prev: &[f64], a: &DenseMatrix) -> Option<f64> {
    debug_assert_eq!(x_t.len(), x_prev.len());
    let d: Vec<f64> = x_t.iter().zip(x_prev).map(|(a, b)| a - b).collect();
    let num = linalg::norm_sq(&d);
    if num == 0.0 {
        return None;
    }
    let ad = a.matvec(&d).ok()?;
    let den = linalg::norm_sq(&ad);
    if den < BB_DENOMINATOR_FLOOR {
        return None;
    }
    Some(num / den)
}

/// `1 / ||hessian of the reduced loss at x||_2` via power iteration;
/// returns `eta0` when the Hessian norm vanishes.
pub fn lipschitz_stepsize(
    a: &DenseMatrix,
    y: &[f64],
    x: &[f64],
    layers: u32,
    eta0: f64,
) -> Result<f64> {
    let h = objective::reduced_hessian(a, y, x, layers)?;
    let est = linalg::spectral_norm_symmetric(&h, 1e-9, 500);
    if est.value <= f64::MIN_POSITIVE {
        Ok(eta0)
    } else {
        Ok(1.0 / est.value)
    }
}

/// `y_+ = A x_+`: the Euclidean projection of `y` onto the cone
/// `{Az : z >= 0}`, obtained from a Lawson-Hanson solve. Unique even when
/// the NNLS solution itself is not.
pub fn compute_y_plus(problem: &NnlsProblem) -> Result<Vec<f64>> {
    let report = solve_lawson_hanson(problem, 1e-10, lh_default_max_iters(problem.n()))?;
    problem.a.matvec(&report.x_final)
}

pub(crate) fn lh_default_max_iters(n: usize) -> u64 {
    (100 * n as u64).max(1000)
}

pub(crate) fn finish_report(
    problem: &NnlsProblem,
    x_final: Vec<f64>,
    iterations: u64,
    stop_reason: StopReason,
    trace: Vec<TracePoint>,
    sign_flips: u64,
    rank_fallback: bool,
) -> Result<SolveReport> {
    let objective_final = objective::nnls_objective(&problem.a, &problem.y, &x_final)?;
    let kkt = objective::kkt_check(&problem.a, &problem.y, &x_final, objective::DEFAULT_KKT_TOL)?;
    Ok(SolveReport {
        x_final,
        objective_final,
        iterations,
        stop_reason,
        kkt,
        trace,
        sign_flips,
        rank_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bb_unit_ratio() {
        let a = DenseMatrix::identity(2);
        let eta = bb_stepsize(&[1.0, 0.0], &[0.0, 0.0], &a).unwrap();
        assert_eq!(eta, 1.0);
    }

    #[test]
    fn bb_scaled_matrix() {
        let a = DenseMatrix::new(2, 2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        let eta = bb_stepsize(&[1.0, 0.0], &[0.0, 0.0], &a).unwrap();
        assert_eq!(eta, 0.25);
    }

    #[test]
    fn bb_fallback_on_equal_iterates() {
        let a = DenseMatrix::identity(2);
        assert!(bb_stepsize(&[1.0, 1.0], &[1.0, 1.0], &a).is_none());
    }

    #[test]
    fn lipschitz_scalar_cases() {
        let a = DenseMatrix::new(1, 1, vec![1.0]).unwrap();
        let eta = lipschitz_stepsize(&a, &[0.0], &[2.0], 2, 1.0).unwrap();
        assert!((eta - 1.0 / 24.0).abs() < 1e-12);
        let eta = lipschitz_stepsize(&a, &[4.0], &[2.0], 2, 1.0).unwrap();
        assert!((eta - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default_for(3);
        cfg.layers = 1;
        assert!(matches!(cfg.validate(3), Err(NnlsError::Domain(_))));
        let mut cfg = SolverConfig::default_for(3);
        cfg.init[1] = 0.0;
        assert!(matches!(cfg.validate(3), Err(NnlsError::Domain(_))));
        assert!(SolverConfig::default_for(3).validate(3).is_ok());
    }
}
