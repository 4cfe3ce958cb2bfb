//! Vanilla gradient descent on the factorized loss, full-batch and
//! stochastic. The update is `x_{t+1} = x_t - eta_t * g(x_t)` with
//! `g(x) = [A^T (A x^{.L} - y)] .* x^{.(L-1)}`; the product iterate
//! `x^{.L}` is what the report exposes.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{NnlsError, Result};
use crate::linalg::{self, DenseMatrix};
use crate::objective::{flow_field_into, reduced_hessian_from_gram, FlowWorkspace};
use crate::problem::{det_rng, NnlsProblem, STREAM_SGD};

use super::{
    bb_stepsize, finish_report, SolveReport, SolverConfig, StepRule, StopReason, TracePoint,
    DEFAULT_ETA,
};

/// Full-batch gradient descent on the factorized loss. When `y_plus` is
/// supplied, the trace records `||A x~ - y_+||^2` alongside the objective.
pub fn solve_gd(
    problem: &NnlsProblem,
    cfg: &SolverConfig,
    y_plus: Option<&[f64]>,
) -> Result<SolveReport> {
    run_descent(problem, cfg, y_plus, None)
}

/// Stochastic variant: each step samples `batch_size` row indices
/// uniformly without replacement (deterministic in `cfg.seed`) and steps
/// along the batch-summed gradient
/// `[A_B^T (A_B x^{.L} - y_B)] .* x^{.(L-1)}`. With `batch_size = M` the
/// iterate sequence is bit-identical to [`solve_gd`]. Gradient and
/// plateau stopping rules are evaluated at trace points, where the full
/// objective is computed.
pub fn solve_sgd(problem: &NnlsProblem, cfg: &SolverConfig) -> Result<SolveReport> {
    let m = problem.m();
    let batch = cfg.batch_size.unwrap_or(m.div_ceil(10));
    if batch == 0 || batch > m {
        return Err(NnlsError::domain(format!(
            "batch_size {batch} outside [1, {m}]"
        )));
    }
    run_descent(problem, cfg, None, Some(batch))
}

fn run_descent(
    problem: &NnlsProblem,
    cfg: &SolverConfig,
    y_plus: Option<&[f64]>,
    batch: Option<usize>,
) -> Result<SolveReport> {
    let a = &problem.a;
    let y = &problem.y;
    let (m, n) = (problem.m(), problem.n());
    cfg.validate(n)?;
    if let Some(yp) = y_plus {
        if yp.len() != m {
            return Err(NnlsError::dim(format!(
                "y_plus has length {} but A has {m} rows",
                yp.len()
            )));
        }
    }

    let nesterov = matches!(cfg.step_rule, StepRule::NesterovConstant { .. });
    let stochastic = batch.is_some();
    let odd_layers = cfg.layers % 2 == 1;
    // the stop-check evaluation doubles as the step gradient unless the
    // step is taken at a different point (lookahead) or on a batch
    let eval_every_iter = !stochastic && !nesterov;

    let mut x = cfg.init.clone();
    let mut x_prev = x.clone();
    let mut x_next = vec![0.0; n];
    let mut g_step = vec![0.0; n];
    let mut g_check = vec![0.0; n];
    let mut look = vec![0.0; n];
    let mut ws = FlowWorkspace::new(m, n);
    let mut ws_check = FlowWorkspace::new(m, n);

    let mut rng: ChaCha12Rng = det_rng(cfg.seed, STREAM_SGD);
    let mut pool: Vec<usize> = (0..m).collect();

    let mut gram_cache: Option<DenseMatrix> = None;
    let mut lip_eta = DEFAULT_ETA;

    let start = Instant::now();
    let mut trace: Vec<TracePoint> = Vec::new();
    let mut last_trace_obj: Option<f64> = None;
    let mut last_trace_iter: Option<u64> = None;
    let mut last_eta = f64::NAN;
    let mut sign_flips: u64 = 0;
    let mut steps: u64 = 0;

    let reason = loop {
        let at_cadence = steps % cfg.trace_every == 0 || steps == cfg.max_iters;
        if eval_every_iter || at_cadence {
            flow_field_into(a, y, &x, cfg.layers, &mut ws_check, &mut g_check);
            let obj = linalg::norm_sq(&ws_check.residual);
            if !obj.is_finite() {
                return Err(NnlsError::Divergence {
                    iter: steps,
                    message: "objective became non-finite".into(),
                    trace,
                });
            }
            if at_cadence {
                trace.push(trace_point(
                    steps, obj, &ws_check, y, y_plus, last_eta, &start,
                ));
                last_trace_iter = Some(steps);
                if let Some(prev) = last_trace_obj {
                    if cfg.objective_tol > 0.0 && (prev - obj).abs() <= cfg.objective_tol {
                        break StopReason::ObjectiveTol;
                    }
                }
                last_trace_obj = Some(obj);
            }
            if cfg.grad_tol > 0.0 && linalg::sup_norm(&g_check) <= cfg.grad_tol {
                break StopReason::GradTol;
            }
        }
        if steps == cfg.max_iters {
            break StopReason::MaxIters;
        }

        let eta = match cfg.step_rule {
            StepRule::Constant { eta } | StepRule::NesterovConstant { eta } => eta,
            StepRule::BarzilaiBorwein { eta0 } => {
                if steps == 0 {
                    eta0
                } else {
                    bb_stepsize(&x, &x_prev, a).unwrap_or(eta0)
                }
            }
            StepRule::LipschitzOracle { refresh_every } => {
                if steps % refresh_every == 0 {
                    let gram = gram_cache.get_or_insert_with(|| a.gram());
                    let h = reduced_hessian_from_gram(gram, a, y, &x, cfg.layers);
                    let est = linalg::spectral_norm_symmetric(&h, 1e-9, 500);
                    lip_eta = if est.value <= f64::MIN_POSITIVE {
                        DEFAULT_ETA
                    } else {
                        1.0 / est.value
                    };
                }
                lip_eta
            }
        };
        last_eta = eta;

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
        let grad: &[f64] = if let Some(b) = batch {
            batch_flow(
                a,
                y,
                stepping_point,
                cfg.layers,
                b,
                &mut rng,
                &mut pool,
                &mut ws,
                &mut g_step,
            );
            &g_step
        } else if nesterov {
            flow_field_into(a, y, stepping_point, cfg.layers, &mut ws, &mut g_step);
            &g_step
        } else {
            &g_check
        };

        let mut finite = true;
        for i in 0..n {
            x_next[i] = stepping_point[i] - eta * grad[i];
            finite &= x_next[i].is_finite();
        }
        if !finite {
            return Err(NnlsError::Divergence {
                iter: steps,
                message: "iterate became non-finite".into(),
                trace,
            });
        }
        if odd_layers {
            for i in 0..n {
                if x_next[i] * x[i] < 0.0 {
                    sign_flips += 1;
                }
            }
        }
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut x_next);
        steps += 1;
    };

    if last_trace_iter != Some(steps) {
        flow_field_into(a, y, &x, cfg.layers, &mut ws_check, &mut g_check);
        let obj = linalg::norm_sq(&ws_check.residual);
        trace.push(trace_point(
            steps, obj, &ws_check, y, y_plus, last_eta, &start,
        ));
    }
    let x_final = linalg::hadamard_pow(&x, cfg.layers);
    finish_report(problem, x_final, steps, reason, trace, sign_flips, false)
}

fn trace_point(
    iter: u64,
    objective: f64,
    ws: &FlowWorkspace,
    y: &[f64],
    y_plus: Option<&[f64]>,
    stepsize: f64,
    start: &Instant,
) -> TracePoint {
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
    TracePoint {
        iter,
        objective,
        residual_yplus_sq,
        bregman_ref: f64::NAN,
        l1_norm: linalg::l1_norm(&ws.xt),
        min_entry: linalg::min_entry(&ws.xt),
        stepsize,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

#[allow(clippy::too_many_arguments)]
fn batch_flow(
    a: &DenseMatrix,
    y: &[f64],
    x: &[f64],
    layers: u32,
    batch_size: usize,
    rng: &mut ChaCha12Rng,
    pool: &mut [usize],
    ws: &mut FlowWorkspace,
    out: &mut [f64],
) {
    let m = a.rows();
    linalg::hadamard_pow_into(x, layers, &mut ws.xt);
    for i in 0..batch_size {
        let j = rng.gen_range(i..m);
        pool.swap(i, j);
    }
    // ascending row order keeps the accumulation identical to the
    // full-gradient path when the batch covers every row
    pool[..batch_size].sort_unstable();
    ws.s.fill(0.0);
    for &row_idx in &pool[..batch_size] {
        let row = a.row(row_idx);
        let r = linalg::dot(row, &ws.xt) - y[row_idx];
        linalg::axpy(r, row, &mut ws.s);
    }
    for ((o, &si), &xi) in out.iter_mut().zip(&ws.s).zip(x) {
        *o = si * xi.powi(layers as i32 - 1);
    }
}
