//! Classical fourth-order Runge-Kutta integration of the exact gradient
//! flow `x'(t) = -g(x(t))` with
//! `g(x) = [A^T (A x^{.L} - y)] .* x^{.(L-1)}`.
//!
//! Along the trajectory the trace optionally records the squared distance
//! `||A x~(t) - y_+||^2` to the cone projection and the Bregman divergence
//! `D_F(z_+, x~(t))` to a reference solution, the two Lyapunov-type
//! quantities of the convergence analysis.

use std::time::Instant;

use crate::error::{NnlsError, Result};
use crate::linalg;
use crate::objective::{bregman_divergence, flow_field_into, FlowWorkspace};
use crate::problem::NnlsProblem;

use super::{finish_report, SolveReport, StopReason, TracePoint};

/// Integrates the flow from `x0 >= 0` up to `t_end` with fixed step `dt`.
/// Zero coordinates are absorbing, so a boundary initialization (e.g. the
/// factors of an active-set solution) is allowed and stays put.
#[allow(clippy::too_many_arguments)]
pub fn solve_flow_rk4(
    problem: &NnlsProblem,
    layers: u32,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    y_plus: Option<&[f64]>,
    z_plus: Option<&[f64]>,
) -> Result<SolveReport> {
    if layers < 2 {
        return Err(NnlsError::domain(format!("layers must be >= 2, got {layers}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(NnlsError::domain("dt must be positive and finite"));
    }
    if !(t_end > dt) {
        return Err(NnlsError::domain("t_end must exceed dt"));
    }
    let a = &problem.a;
    let y = &problem.y;
    let (m, n) = (problem.m(), problem.n());
    if x0.len() != n {
        return Err(NnlsError::dim(format!(
            "x0 has length {} but A has {n} columns",
            x0.len()
        )));
    }
    if let Some(pos) = x0.iter().position(|&v| v < 0.0 || !v.is_finite()) {
        return Err(NnlsError::domain(format!(
            "x0[{pos}] = {} must be nonnegative and finite",
            x0[pos]
        )));
    }
    if let Some(yp) = y_plus {
        if yp.len() != m {
            return Err(NnlsError::dim("y_plus length does not match A rows"));
        }
    }
    if let Some(zp) = z_plus {
        if zp.len() != n {
            return Err(NnlsError::dim("z_plus length does not match A columns"));
        }
    }

    let steps = (t_end / dt).round().max(1.0) as u64;
    let cadence = (steps / 2000).max(1);
    let mut x = x0.to_vec();
    let mut stage = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut ws = FlowWorkspace::new(m, n);
    let start = Instant::now();
    let mut trace: Vec<TracePoint> = Vec::new();

    for step in 0..=steps {
        if step % cadence == 0 || step == steps {
            let point = observe(
                problem, layers, &x, step, dt, y_plus, z_plus, &mut ws, &start,
            );
            if !point.objective.is_finite() {
                return Err(NnlsError::Divergence {
                    iter: step,
                    message: "flow state became non-finite; try a smaller dt".into(),
                    trace,
                });
            }
            trace.push(point);
        }
        if step == steps {
            break;
        }
        // classical RK4 on x' = -g(x)
        flow_field_into(a, y, &x, layers, &mut ws, &mut k1);
        for i in 0..n {
            stage[i] = x[i] - 0.5 * dt * k1[i];
        }
        flow_field_into(a, y, &stage, layers, &mut ws, &mut k2);
        for i in 0..n {
            stage[i] = x[i] - 0.5 * dt * k2[i];
        }
        flow_field_into(a, y, &stage, layers, &mut ws, &mut k3);
        for i in 0..n {
            stage[i] = x[i] - dt * k3[i];
        }
        flow_field_into(a, y, &stage, layers, &mut ws, &mut k4);
        let mut finite = true;
        for i in 0..n {
            x[i] -= dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite &= x[i].is_finite();
        }
        if !finite {
            return Err(NnlsError::Divergence {
                iter: step,
                message: "flow state became non-finite; try a smaller dt".into(),
                trace,
            });
        }
    }

    let x_final = linalg::hadamard_pow(&x, layers);
    finish_report(
        problem,
        x_final,
        steps,
        StopReason::MaxIters,
        trace,
        0,
        false,
    )
}

#[allow(clippy::too_many_arguments)]
fn observe(
    problem: &NnlsProblem,
    layers: u32,
    x: &[f64],
    step: u64,
    dt: f64,
    y_plus: Option<&[f64]>,
    z_plus: Option<&[f64]>,
    ws: &mut FlowWorkspace,
    start: &Instant,
) -> TracePoint {
    let a = &problem.a;
    let y = &problem.y;
    linalg::hadamard_pow_into(x, layers, &mut ws.xt);
    a.matvec_into(&ws.xt, &mut ws.residual);
    for (r, &yi) in ws.residual.iter_mut().zip(y) {
        *r -= yi;
    }
    let objective = linalg::norm_sq(&ws.residual);
    let residual_yplus_sq = match y_plus {
        Some(yp) => ws
            .residual
            .iter()
            .zip(y.iter().zip(yp))
            .map(|(&r, (&yi, &pi))| {
                let d = r + yi - pi;
                d * d
            })
            .sum(),
        None => f64::NAN,
    };
    // D_F needs a strictly positive second argument; once a coordinate
    // hits zero (or underflows) the divergence is reported as absent
    let bregman_ref = match z_plus {
        Some(zp) if ws.xt.iter().all(|&v| v > 0.0) => {
            bregman_divergence(zp, &ws.xt, layers).unwrap_or(f64::NAN)
        }
        _ => f64::NAN,
    };
    TracePoint {
        iter: step,
        objective,
        residual_yplus_sq,
        bregman_ref,
        l1_norm: linalg::l1_norm(&ws.xt),
        min_entry: linalg::min_entry(&ws.xt),
        stepsize: dt,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::solvers::solve_lawson_hanson;

    #[test]
    fn scalar_flow_reaches_the_fit() {
        let p = NnlsProblem::new(DenseMatrix::new(1, 1, vec![1.0]).unwrap(), vec![4.0]).unwrap();
        let report = solve_flow_rk4(&p, 2, &[1.0], 10.0, 1e-3, None, None).unwrap();
        assert!((report.x_final[0] - 4.0).abs() < 1e-3);
    }

    #[test]
    fn stationary_initialization_stays_put() {
        let p = crate::problem::consistent_sparse_problem(12, 8, 3, 21, false).unwrap();
        let lh = solve_lawson_hanson(&p, 1e-12, 10_000).unwrap();
        let x0: Vec<f64> = lh.x_final.iter().map(|&v| v.powf(0.5)).collect();
        let report = solve_flow_rk4(&p, 2, &x0, 1.0, 0.01, None, None).unwrap();
        for (xf, lf) in report.x_final.iter().zip(&lh.x_final) {
            assert!((xf - lf).abs() < 1e-10, "{xf} vs {lf}");
        }
    }

    #[test]
    fn rejects_negative_initialization() {
        let p = NnlsProblem::new(DenseMatrix::identity(2), vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            solve_flow_rk4(&p, 2, &[1.0, -0.1], 1.0, 0.01, None, None),
            Err(NnlsError::Domain(_))
        ));
    }

    #[test]
    fn oversized_step_reports_divergence() {
        let p = NnlsProblem::new(DenseMatrix::new(1, 1, vec![1.0]).unwrap(), vec![4.0]).unwrap();
        match solve_flow_rk4(&p, 2, &[50.0], 10.0, 1.0, None, None) {
            Err(NnlsError::Divergence { message, .. }) => {
                assert!(message.contains("smaller dt"));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
