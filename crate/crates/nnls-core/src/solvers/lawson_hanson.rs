//! Lawson-Hanson active-set method, the classical finite-termination
//! reference solver.
//!
//! The passive set P holds coordinates currently allowed to be positive.
//! Each outer iteration moves the most-violating dual index into P and
//! solves the unconstrained least-squares subproblem restricted to P via
//! the normal equations (Cholesky); the inner loop walks the segment
//! towards that subproblem solution, dropping coordinates that hit zero,
//! until the passive solution is strictly positive. Termination is at a
//! KKT point. Rank-deficient subproblems fall back to a diagonally
//! pivoted solve and are flagged in the report.

use std::time::Instant;

use crate::error::{NnlsError, Result};
use crate::linalg::{self, DenseMatrix};
use crate::problem::NnlsProblem;

use super::{finish_report, SolveReport, StopReason, TracePoint};

/// Relative pivot threshold for the normal-equation Cholesky.
const PIVOT_EPS: f64 = 1e-13;

/// Coordinates whose post-ratio-step value falls below this fraction of
/// the largest iterate entry are clamped to exactly zero and leave P.
const REMOVAL_SLACK: f64 = 1e-12;

pub fn solve_lawson_hanson(
    problem: &NnlsProblem,
    tol: f64,
    max_iters: u64,
) -> Result<SolveReport> {
    if tol <= 0.0 {
        return Err(NnlsError::domain("solve_lawson_hanson: tol must be > 0"));
    }
    let a = &problem.a;
    let y = &problem.y;
    let (m, n) = (problem.m(), problem.n());
    if y.len() != m {
        return Err(NnlsError::dim("y length does not match A rows"));
    }

    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let mut residual = vec![0.0; m];
    let mut w = vec![0.0; n];
    let mut rank_fallback = false;
    let mut solves: u64 = 0;
    let mut outer: u64 = 0;
    let start = Instant::now();
    let mut trace: Vec<TracePoint> = Vec::new();

    loop {
        // w = A^T (y - A x)
        a.matvec_into(&x, &mut residual);
        for (ri, &yi) in residual.iter_mut().zip(y) {
            *ri = yi - *ri;
        }
        a.matvec_t_into(&residual, &mut w);
        trace.push(TracePoint {
            iter: outer,
            objective: linalg::norm_sq(&residual),
            residual_yplus_sq: f64::NAN,
            bregman_ref: f64::NAN,
            l1_norm: linalg::l1_norm(&x),
            min_entry: linalg::min_entry(&x),
            stepsize: f64::NAN,
            wall_seconds: start.elapsed().as_secs_f64(),
        });

        let entering = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j_star) = entering else {
            break; // KKT point: no positive dual on the active set
        };
        passive[j_star] = true;

        loop {
            solves += 1;
            if solves > max_iters {
                let report =
                    finish_report(problem, x, outer, StopReason::MaxIters, trace, 0, rank_fallback)?;
                return Err(NnlsError::MaxIters {
                    max_iters,
                    report: Box::new(report),
                });
            }
            let (z, deficient) = solve_passive_ls(a, y, &passive);
            if deficient {
                rank_fallback = true;
            }
            let all_positive = (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0);
            if all_positive {
                x.copy_from_slice(&z);
                break;
            }
            // ratio step towards z, stopping at the first coordinate
            // driven to the boundary
            let mut alpha = f64::INFINITY;
            let mut blocker = usize::MAX;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    let denom = x[j] - z[j];
                    let ratio = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    if ratio < alpha {
                        alpha = ratio;
                        blocker = j;
                    }
                }
            }
            for j in 0..n {
                if passive[j] {
                    x[j] += alpha * (z[j] - x[j]);
                }
            }
            let scale = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            for j in 0..n {
                if passive[j] && (j == blocker || x[j] <= REMOVAL_SLACK * scale) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        outer += 1;
    }

    finish_report(problem, x, outer, StopReason::GradTol, trace, 0, rank_fallback)
}

/// Least-squares solve restricted to the passive coordinates via the
/// normal equations `(A_P^T A_P) z_P = A_P^T y`, embedded back into R^n.
fn solve_passive_ls(a: &DenseMatrix, y: &[f64], passive: &[bool]) -> (Vec<f64>, bool) {
    let n = a.cols();
    let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
    let k = idx.len();
    let mut gram = DenseMatrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    {
        let gdata = gram.data_mut();
        for i in 0..a.rows() {
            let row = a.row(i);
            let yi = y[i];
            for (s, &js) in idx.iter().enumerate() {
                let v = row[js];
                if v == 0.0 {
                    continue;
                }
                rhs[s] += v * yi;
                for (t, &jt) in idx.iter().enumerate().skip(s) {
                    gdata[s * k + t] += v * row[jt];
                }
            }
        }
        for s in 0..k {
            for t in (s + 1)..k {
                gdata[t * k + s] = gdata[s * k + t];
            }
        }
    }
    let (z_sub, deficient) = match linalg::cholesky_solve(&gram, &rhs, PIVOT_EPS) {
        Some(z) => (z, false),
        None => {
            let (z, _) = linalg::pivoted_semidefinite_solve(&gram, &rhs, PIVOT_EPS);
            (z, true)
        }
    };
    let mut z = vec![0.0; n];
    for (s, &j) in idx.iter().enumerate() {
        z[j] = z_sub[s];
    }
    (z, deficient)
}
