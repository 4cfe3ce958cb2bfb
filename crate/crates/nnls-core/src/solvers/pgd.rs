//! Projected gradient descent on the convex NNLS objective:
//! `x_{t+1} = clamp_+(x_t - eta_t A^T (A x_t - y))`, started from zero.

use std::time::Instant;

use crate::error::{NnlsError, Result};
use crate::linalg;
use crate::problem::NnlsProblem;

use super::{
    bb_stepsize, finish_report, SolveReport, StepRule, StopReason, TracePoint, DEFAULT_ETA,
};

/// Runs PGD until `||x_{t+1} - x_t||_inf <= tol` or the budget runs out.
/// The customary stepsize is `1 / ||A^T A||_2`, which
/// [`StepRule::LipschitzOracle`] selects automatically.
pub fn solve_pgd(
    problem: &NnlsProblem,
    step_rule: &StepRule,
    max_iters: u64,
    tol: f64,
) -> Result<SolveReport> {
    step_rule.validate()?;
    if tol <= 0.0 {
        return Err(NnlsError::domain("solve_pgd: tol must be > 0"));
    }
    if max_iters == 0 {
        return Err(NnlsError::domain("solve_pgd: max_iters must be >= 1"));
    }
    let a = &problem.a;
    let y = &problem.y;
    let (m, n) = (problem.m(), problem.n());

    let nesterov = matches!(step_rule, StepRule::NesterovConstant { .. });
    let lip_eta = match step_rule {
        StepRule::LipschitzOracle { .. } => {
            let est = linalg::gram_spectral_norm(a, 1e-10, 10_000)?;
            Some(if est.value <= f64::MIN_POSITIVE {
                DEFAULT_ETA
            } else {
                1.0 / est.value
            })
        }
        _ => None,
    };

    let mut x = vec![0.0; n];
    let mut x_prev = x.clone();
    let mut x_next = vec![0.0; n];
    let mut look = vec![0.0; n];
    let mut r = vec![0.0; m];
    let mut g = vec![0.0; n];

    let cadence = (max_iters / 10_000).clamp(1, 1_000);
    let start = Instant::now();
    let mut trace: Vec<TracePoint> = Vec::new();
    let mut last_trace_iter: Option<u64> = None;
    let mut last_eta = f64::NAN;
    let mut steps: u64 = 0;

    let reason = loop {
        let stepping_point: &[f64] = if nesterov {
            let t = (steps + 1) as f64;
            let beta = (t - 1.0) / (t + 2.0);
            for i in 0..n {
                look[i] = x[i] + beta * (x[i] - x_prev[i]);
            }
            &look
        } else {
            &x
        };
        a.matvec_into(stepping_point, &mut r);
        for (ri, &yi) in r.iter_mut().zip(y) {
            *ri -= yi;
        }
        a.matvec_t_into(&r, &mut g);
        let obj_at_point = linalg::norm_sq(&r);
        if !obj_at_point.is_finite() {
            return Err(NnlsError::Divergence {
                iter: steps,
                message: "objective became non-finite".into(),
                trace,
            });
        }
        if steps % cadence == 0 || steps == max_iters {
            let objective = if nesterov && steps > 0 {
                crate::objective::nnls_objective(a, y, &x)?
            } else {
                obj_at_point
            };
            trace.push(TracePoint {
                iter: steps,
                objective,
                residual_yplus_sq: f64::NAN,
                bregman_ref: f64::NAN,
                l1_norm: linalg::l1_norm(&x),
                min_entry: linalg::min_entry(&x),
                stepsize: last_eta,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
            last_trace_iter = Some(steps);
        }
        if steps == max_iters {
            break StopReason::MaxIters;
        }
        let eta = match *step_rule {
            StepRule::Constant { eta } | StepRule::NesterovConstant { eta } => eta,
            StepRule::BarzilaiBorwein { eta0 } => {
                if steps == 0 {
                    eta0
                } else {
                    bb_stepsize(&x, &x_prev, a).unwrap_or(eta0)
                }
            }
            StepRule::LipschitzOracle { .. } => lip_eta.expect("precomputed"),
        };
        last_eta = eta;
        let mut step_inf = 0.0_f64;
        for i in 0..n {
            let candidate = stepping_point[i] - eta * g[i];
            x_next[i] = candidate.max(0.0);
            step_inf = step_inf.max((x_next[i] - x[i]).abs());
        }
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut x_next);
        steps += 1;
        if step_inf <= tol {
            break StopReason::GradTol;
        }
    };

    if last_trace_iter != Some(steps) {
        let objective = crate::objective::nnls_objective(a, y, &x)?;
        trace.push(TracePoint {
            iter: steps,
            objective,
            residual_yplus_sq: f64::NAN,
            bregman_ref: f64::NAN,
            l1_norm: linalg::l1_norm(&x),
            min_entry: linalg::min_entry(&x),
            stepsize: last_eta,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    finish_report(problem, x, steps, reason, trace, 0, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    #[test]
    fn pgd_clamps_identity_in_one_step() {
        let p = NnlsProblem::new(DenseMatrix::identity(2), vec![1.0, -1.0]).unwrap();
        let rule = StepRule::Constant { eta: 1.0 };
        let report = solve_pgd(&p, &rule, 100, 1e-12).unwrap();
        assert_eq!(report.x_final, vec![1.0, 0.0]);
        assert!(report.kkt.is_optimal());
        assert!(report.iterations <= 2);
    }

    #[test]
    fn pgd_fully_clamped_direction() {
        let p = NnlsProblem::new(DenseMatrix::identity(2), vec![-1.0, -2.0]).unwrap();
        let rule = StepRule::LipschitzOracle { refresh_every: 1 };
        let report = solve_pgd(&p, &rule, 100, 1e-12).unwrap();
        assert_eq!(report.x_final, vec![0.0, 0.0]);
        assert!(report.kkt.is_optimal());
    }

    #[test]
    fn pgd_iterates_stay_nonnegative() {
        let p = crate::problem::consistent_sparse_problem(8, 12, 3, 17, false).unwrap();
        let rule = StepRule::LipschitzOracle { refresh_every: 1 };
        let report = solve_pgd(&p, &rule, 20_000, 1e-12).unwrap();
        for pt in &report.trace {
            assert!(pt.min_entry >= 0.0);
        }
        assert!(report.x_final.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn pgd_rejects_nonpositive_tol() {
        let p = NnlsProblem::new(DenseMatrix::identity(2), vec![1.0, 1.0]).unwrap();
        let rule = StepRule::Constant { eta: 1.0 };
        assert!(matches!(
            solve_pgd(&p, &rule, 10, 0.0),
            Err(NnlsError::Domain(_))
        ));
    }
}
