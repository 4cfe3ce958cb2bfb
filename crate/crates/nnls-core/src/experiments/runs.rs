//! The experiment runners. Every experiment is deterministic given its
//! spec: trial `i` derives its instance from `master_seed + i`, trials may
//! run on `spec.threads` worker threads, and rows are ordered by
//! (trial, grid point) regardless of scheduling.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{NnlsError, Result};
use crate::linalg::{self, DenseMatrix};
use crate::objective;
use crate::problem::{
    consistent_sparse_problem, det_rng, gen_gaussian_matrix, gen_sparse_nonneg,
    q_perturbed_problem, NnlsProblem, STREAM_NOISE, STREAM_SIGNAL,
};
use crate::solvers::{
    solve_flow_rk4, solve_gd, solve_lawson_hanson, solve_pgd, solve_sgd, SolveReport,
    SolverConfig, StepRule, TracePoint,
};
use crate::textdoc::fmt_f64;

use super::spec::{ExperimentKind, ExperimentSpec};
use super::table::{Cell, ColType, ResultTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    HumaneText,
}

/// Writes a result table as CSV (`#`-metadata block, header, rows) or as
/// aligned human-readable text.
pub fn emit_table(table: &ResultTable, path: impl AsRef<Path>, format: TableFormat) -> Result<()> {
    match format {
        TableFormat::Csv => table.write_csv(path),
        TableFormat::HumaneText => {
            std::fs::write(path, table.to_humane_string())?;
            Ok(())
        }
    }
}

/// Dispatches on the spec kind and stamps the metadata block (spec echo,
/// library version, wall time). Rerunning the echoed spec reproduces the
/// data rows exactly; only wall-clock columns differ.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let start = Instant::now();
    let mut table = match spec.kind {
        ExperimentKind::InitSweep => run_init_sweep(spec)?,
        ExperimentKind::LayerTrace => run_layer_trace(spec)?,
        ExperimentKind::StepsizeRace => run_stepsize_race(spec)?,
        ExperimentKind::Stability => run_stability(spec)?,
        ExperimentKind::RateCheck => run_rate_check(spec)?,
        ExperimentKind::Timing => run_timing(spec)?,
    };
    table.set_meta("spec", spec.to_line());
    table.set_meta("version", env!("CARGO_PKG_VERSION"));
    table.set_meta("wall_seconds", fmt_f64(start.elapsed().as_secs_f64()));
    Ok(table)
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.kind != kind {
        return Err(NnlsError::domain(format!(
            "spec kind is {}, expected {}",
            spec.kind.as_str(),
            kind.as_str()
        )));
    }
    spec.validate()
}

/// Runs trial bodies on a small worker pool; results come back in trial
/// order so the output is schedule-independent.
fn parallel_trials<T: Send>(
    trials: usize,
    threads: usize,
    body: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    let workers = threads.max(1).min(trials.max(1));
    if workers <= 1 {
        return (0..trials).map(body).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..trials).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= trials {
                    break;
                }
                let result = body(i);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("worker filled every slot"))
        .collect()
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`; `y` is floored at 1e-300
/// so fully converged tails stay finite.
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, _)| *x > 0.0)
        .map(|&(x, y)| (x.ln(), y.max(1e-300).ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (k * sxy - sx * sy) / (k * sxx - sx * sx)
}

fn first_iter_reaching(trace: &[TracePoint], target_objective: f64) -> Option<u64> {
    trace
        .iter()
        .find(|p| p.objective <= target_objective)
        .map(|p| p.iter)
}

// ---------------------------------------------------------------------
// init sweep
// ---------------------------------------------------------------------

/// l1-norm of the GD limit over an (alpha, layers) grid on consistent
/// sparse instances, with the ground-truth l1 norm as reference.
pub fn run_init_sweep(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::InitSweep)?;
    let mut table = ResultTable::new(&[
        ("trial", ColType::Int),
        ("layers", ColType::Int),
        ("alpha", ColType::Float),
        ("l1_final", ColType::Float),
        ("l1_gt", ColType::Float),
        ("objective_final", ColType::Float),
        ("iterations", ColType::Int),
        ("status", ColType::Text),
    ]);
    let per_trial = parallel_trials(spec.trials, spec.threads, |trial| -> Result<Vec<Vec<Cell>>> {
        let seed = spec.master_seed + trial as u64;
        let problem = consistent_sparse_problem(spec.m, spec.n, spec.s, seed, spec.normalize_columns)?;
        let l1_gt = linalg::l1_norm(problem.x_true.as_ref().expect("generator sets x_true"));
        let mut rows = Vec::new();
        for &layers in &spec.layers_list {
            for &alpha in &spec.alpha_grid {
                let mut cfg = SolverConfig::default_for(spec.n).with_alpha(alpha);
                cfg.layers = layers;
                cfg.step_rule = StepRule::Constant { eta: spec.eta };
                cfg.max_iters = spec.max_iters;
                let row = match solve_gd(&problem, &cfg, None) {
                    Ok(report) => vec![
                        Cell::Int(trial as i64),
                        Cell::Int(layers as i64),
                        Cell::Float(alpha),
                        Cell::Float(linalg::l1_norm(&report.x_final)),
                        Cell::Float(l1_gt),
                        Cell::Float(report.objective_final),
                        Cell::Int(report.iterations as i64),
                        Cell::text("ok"),
                    ],
                    Err(NnlsError::Divergence { iter, .. }) => vec![
                        Cell::Int(trial as i64),
                        Cell::Int(layers as i64),
                        Cell::Float(alpha),
                        Cell::Float(f64::NAN),
                        Cell::Float(l1_gt),
                        Cell::Float(f64::NAN),
                        Cell::Int(iter as i64),
                        Cell::text("diverged"),
                    ],
                    Err(other) => return Err(other),
                };
                rows.push(row);
            }
        }
        Ok(rows)
    });
    for trial_rows in per_trial {
        for row in trial_rows? {
            table.push_row(row);
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------
// layer trace
// ---------------------------------------------------------------------

/// Entrywise absolute error on the ground-truth support over iterations,
/// one column per (layers, support index). Runs that stop early leave NaN
/// on the remaining grid rows.
pub fn run_layer_trace(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::LayerTrace)?;
    let problem = crate::problem::consistent_unit_sparse_problem(
        spec.m,
        spec.n,
        spec.s,
        spec.master_seed,
        spec.normalize_columns,
    )?;
    let x_gt = problem.x_true.clone().expect("generator sets x_true");
    let support: Vec<usize> = (0..spec.n).filter(|&i| x_gt[i] != 0.0).collect();

    let mut columns: Vec<(String, ColType)> = vec![("iter".to_string(), ColType::Int)];
    for &layers in &spec.layers_list {
        for &idx in &support {
            columns.push((format!("err_l{layers}_i{idx}"), ColType::Float));
        }
    }
    let col_refs: Vec<(&str, ColType)> = columns.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    let mut table = ResultTable::new(&col_refs);

    let runs: Vec<Vec<(u64, Vec<f64>)>> = spec
        .layers_list
        .iter()
        .map(|&layers| {
            layer_trace_run(&problem, &x_gt, &support, layers, spec)
        })
        .collect();

    // shared iteration grid: union of recorded iterations
    let mut grid: Vec<u64> = runs.iter().flatten().map(|(it, _)| *it).collect();
    grid.sort_unstable();
    grid.dedup();
    for &iter in &grid {
        let mut row = vec![Cell::Int(iter as i64)];
        for run in &runs {
            match run.binary_search_by_key(&iter, |(it, _)| *it) {
                Ok(pos) => row.extend(run[pos].1.iter().map(|&e| Cell::Float(e))),
                Err(_) => row.extend(support.iter().map(|_| Cell::Float(f64::NAN))),
            }
        }
        table.push_row(row);
    }
    Ok(table)
}

fn layer_trace_run(
    problem: &NnlsProblem,
    x_gt: &[f64],
    support: &[usize],
    layers: u32,
    spec: &ExperimentSpec,
) -> Vec<(u64, Vec<f64>)> {
    let a = &problem.a;
    let y = &problem.y;
    let n = problem.n();
    let mut x = vec![spec.alpha; n];
    let mut g = vec![0.0; n];
    let mut ws = objective::FlowWorkspace::new(problem.m(), n);
    let mut records = Vec::new();
    let mut steps: u64 = 0;
    loop {
        objective::flow_field_into(a, y, &x, layers, &mut ws, &mut g);
        let finite = ws.xt.iter().all(|v| v.is_finite());
        let done = steps == spec.max_iters
            || linalg::sup_norm(&g) <= 1e-10
            || !finite;
        if steps % spec.trace_every == 0 || done {
            let errs: Vec<f64> = support.iter().map(|&i| (ws.xt[i] - x_gt[i]).abs()).collect();
            records.push((steps, errs));
        }
        if done {
            break;
        }
        for (xi, &gi) in x.iter_mut().zip(&g) {
            *xi -= spec.eta * gi;
        }
        steps += 1;
    }
    records
}

// ---------------------------------------------------------------------
// stepsize race
// ---------------------------------------------------------------------

const RACE_METHODS: [&str; 6] = ["gd-2l", "gd-3l", "sgd-2l", "gd-2l-bb", "gd-3l-bb", "pgd"];

/// Iterations until the residual norm reaches `spec.precision` for the
/// six contending methods, with per-trial rows, per-method medians, and
/// a decimated objective curve for trial 0.
pub fn run_stepsize_race(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::StepsizeRace)?;
    let mut table = ResultTable::new(&[
        ("method", ColType::Text),
        ("record", ColType::Text),
        ("trial", ColType::Int),
        ("iter", ColType::Float),
        ("objective", ColType::Float),
        ("status", ColType::Text),
        ("wall_seconds", ColType::Float),
    ]);
    let target_obj = spec.precision * spec.precision;

    type TrialOut = Vec<(String, Option<u64>, f64, String, f64, Vec<(u64, f64)>)>;
    let per_trial = parallel_trials(spec.trials, spec.threads, |trial| -> Result<TrialOut> {
        let seed = spec.master_seed + trial as u64;
        let problem = race_instance(spec, seed)?;
        let mut out = Vec::new();
        for &method in &RACE_METHODS {
            let solved = race_run(&problem, spec, method, seed);
            let (reached, final_obj, status, wall, curve) = match solved {
                Ok(report) => {
                    let reached = first_iter_reaching(&report.trace, target_obj);
                    let status = if reached.is_some() { "ok" } else { "budget-exhausted" };
                    let wall = report.trace.last().map(|p| p.wall_seconds).unwrap_or(f64::NAN);
                    let curve: Vec<(u64, f64)> = if trial == 0 {
                        report
                            .trace
                            .iter()
                            .filter(|p| p.iter % spec.trace_every == 0)
                            .map(|p| (p.iter, p.objective))
                            .collect()
                    } else {
                        Vec::new()
                    };
                    (reached, report.objective_final, status.to_string(), wall, curve)
                }
                Err(NnlsError::Divergence { .. }) => {
                    (None, f64::NAN, "diverged".to_string(), f64::NAN, Vec::new())
                }
                Err(other) => return Err(other),
            };
            out.push((method.to_string(), reached, final_obj, status, wall, curve));
        }
        Ok(out)
    });

    let mut iters_by_method: Vec<Vec<f64>> = vec![Vec::new(); RACE_METHODS.len()];
    let mut curves: Vec<(String, Vec<(u64, f64)>)> = Vec::new();
    for (trial, trial_out) in per_trial.into_iter().enumerate() {
        for (mi, (method, reached, final_obj, status, wall, curve)) in
            trial_out?.into_iter().enumerate()
        {
            let iter_cell = match reached {
                Some(it) => it as f64,
                None => -1.0,
            };
            iters_by_method[mi].push(match reached {
                Some(it) => it as f64,
                None => (spec.max_iters + 1) as f64,
            });
            table.push_row(vec![
                Cell::text(&method),
                Cell::text("result"),
                Cell::Int(trial as i64),
                Cell::Float(iter_cell),
                Cell::Float(final_obj),
                Cell::text(&status),
                Cell::Float(wall),
            ]);
            if !curve.is_empty() {
                curves.push((method, curve));
            }
        }
    }
    for (mi, method) in RACE_METHODS.iter().enumerate() {
        let med = median(iters_by_method[mi].clone());
        let status = if med <= spec.max_iters as f64 {
            "ok"
        } else {
            "budget-exhausted"
        };
        table.push_row(vec![
            Cell::text(*method),
            Cell::text("median"),
            Cell::Int(-1),
            Cell::Float(med),
            Cell::Float(f64::NAN),
            Cell::text(status),
            Cell::Float(f64::NAN),
        ]);
    }
    for (method, curve) in curves {
        for (iter, obj) in curve {
            table.push_row(vec![
                Cell::text(&method),
                Cell::text("curve"),
                Cell::Int(0),
                Cell::Float(iter as f64),
                Cell::Float(obj),
                Cell::text(""),
                Cell::Float(f64::NAN),
            ]);
        }
    }
    Ok(table)
}

/// Race instances follow the iteration-count benchmark setup: normalized
/// measurement columns and a unit-norm sparse nonnegative ground truth.
fn race_instance(spec: &ExperimentSpec, seed: u64) -> Result<NnlsProblem> {
    crate::problem::consistent_unit_sparse_problem(
        spec.m,
        spec.n,
        spec.s,
        seed,
        spec.normalize_columns,
    )
}

fn race_run(
    problem: &NnlsProblem,
    spec: &ExperimentSpec,
    method: &str,
    seed: u64,
) -> Result<SolveReport> {
    let n = problem.n();
    let mut cfg = SolverConfig::default_for(n).with_alpha(spec.alpha);
    cfg.max_iters = spec.max_iters;
    cfg.grad_tol = 1e-13;
    cfg.objective_tol = 0.0;
    cfg.trace_every = 1;
    cfg.seed = seed;
    match method {
        "gd-2l" | "gd-3l" => {
            cfg.layers = if method == "gd-2l" { 2 } else { 3 };
            cfg.step_rule = StepRule::Constant { eta: spec.eta };
            solve_gd(problem, &cfg, None)
        }
        "gd-2l-bb" | "gd-3l-bb" => {
            cfg.layers = if method == "gd-2l-bb" { 2 } else { 3 };
            cfg.step_rule = StepRule::BarzilaiBorwein { eta0: spec.eta };
            solve_gd(problem, &cfg, None)
        }
        "sgd-2l" => {
            cfg.layers = 2;
            cfg.step_rule = StepRule::Constant { eta: spec.eta };
            // the full objective is only known at trace points; a cadence
            // of 10 keeps the overhead of the extra matvec at ~10%
            cfg.trace_every = 10;
            solve_sgd(problem, &cfg)
        }
        "pgd" => solve_pgd(
            problem,
            &StepRule::LipschitzOracle { refresh_every: 1 },
            spec.max_iters,
            1e-300,
        ),
        other => Err(NnlsError::domain(format!("unknown race method {other}"))),
    }
}

// ---------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------

const STABILITY_METHODS: [&str; 4] = ["lh", "pgd", "gd-3l", "sgd-3l"];

/// Reconstruction error `||x_hat - x_+||_2` under negative corruption
/// level q for the active-set, projected, and factorized solvers.
pub fn run_stability(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::Stability)?;
    let mut table = ResultTable::new(&[
        ("q", ColType::Float),
        ("trial", ColType::Int),
        ("method", ColType::Text),
        ("error", ColType::Float),
        ("objective", ColType::Float),
        ("iterations", ColType::Float),
        ("status", ColType::Text),
    ]);

    type Row = (f64, usize, String, f64, f64, f64, String);
    let per_trial = parallel_trials(spec.trials, spec.threads, |trial| -> Result<Vec<Row>> {
        let seed = spec.master_seed + trial as u64;
        let mut rows = Vec::new();
        for &q in &spec.q_grid {
            let problem = q_perturbed_problem(spec.m, spec.n, spec.s, q, seed, spec.normalize_columns)?;
            let x_plus = problem.x_plus.clone().expect("generator sets x_plus");
            for &method in &STABILITY_METHODS {
                let (report, mut status) = stability_run(&problem, spec, method, seed)?;
                if method == "lh" && status == "ok" && !report.kkt.is_optimal() {
                    // sanity gate: the active-set reference must certify
                    status = "sanity-kkt".into();
                }
                let err = {
                    let d: f64 = report
                        .x_final
                        .iter()
                        .zip(&x_plus)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    d.sqrt()
                };
                rows.push((
                    q,
                    trial,
                    method.to_string(),
                    err,
                    report.objective_final,
                    report.iterations as f64,
                    status,
                ));
            }
        }
        Ok(rows)
    });

    let mut errors: std::collections::BTreeMap<(String, u64), Vec<f64>> = Default::default();
    for trial_rows in per_trial {
        for (q, trial, method, err, obj, iters, status) in trial_rows? {
            errors
                .entry((method.clone(), q.to_bits()))
                .or_default()
                .push(err);
            table.push_row(vec![
                Cell::Float(q),
                Cell::Int(trial as i64),
                Cell::text(method),
                Cell::Float(err),
                Cell::Float(obj),
                Cell::Float(iters),
                Cell::text(status),
            ]);
        }
    }
    for &q in &spec.q_grid {
        for &method in &STABILITY_METHODS {
            let errs = errors
                .get(&(method.to_string(), q.to_bits()))
                .cloned()
                .unwrap_or_default();
            table.push_row(vec![
                Cell::Float(q),
                Cell::Int(-1),
                Cell::text(method),
                Cell::Float(median(errs)),
                Cell::Float(f64::NAN),
                Cell::Float(f64::NAN),
                Cell::text("median"),
            ]);
        }
    }
    Ok(table)
}

fn stability_run(
    problem: &NnlsProblem,
    spec: &ExperimentSpec,
    method: &str,
    seed: u64,
) -> Result<(SolveReport, String)> {
    match method {
        "lh" => match solve_lawson_hanson(problem, 1e-10, 100 * problem.n() as u64) {
            Ok(r) => Ok((r, "ok".into())),
            Err(NnlsError::MaxIters { report, .. }) => Ok((*report, "budget-exhausted".into())),
            Err(other) => Err(other),
        },
        "pgd" => {
            let r = solve_pgd(
                problem,
                &StepRule::LipschitzOracle { refresh_every: 1 },
                50_000,
                1e-10,
            )?;
            Ok((r, "ok".into()))
        }
        "gd-3l" | "sgd-3l" => {
            let mut cfg = SolverConfig::default_for(problem.n()).with_alpha(spec.alpha);
            cfg.layers = 3;
            cfg.step_rule = StepRule::Constant { eta: spec.eta };
            cfg.max_iters = spec.max_iters;
            cfg.grad_tol = 1e-9;
            cfg.objective_tol = 0.0;
            cfg.trace_every = 1000;
            cfg.seed = seed;
            let solved = if method == "gd-3l" {
                solve_gd(problem, &cfg, None)
            } else {
                solve_sgd(problem, &cfg)
            };
            match solved {
                Ok(r) => Ok((r, "ok".into())),
                Err(NnlsError::Divergence { iter, trace, .. }) => {
                    // keep the last finite sample so the row stays informative
                    let x = vec![f64::NAN; problem.n()];
                    let _ = trace;
                    let report = SolveReport {
                        x_final: x,
                        objective_final: f64::NAN,
                        iterations: iter,
                        stop_reason: crate::solvers::StopReason::MaxIters,
                        kkt: objective::kkt_check(
                            &problem.a,
                            &problem.y,
                            &vec![0.0; problem.n()],
                            1e-8,
                        )?,
                        trace: Vec::new(),
                        sign_flips: 0,
                        rank_fallback: false,
                    };
                    Ok((report, "diverged".into()))
                }
                Err(other) => Err(other),
            }
        }
        other => Err(NnlsError::domain(format!("unknown stability method {other}"))),
    }
}

// ---------------------------------------------------------------------
// rate check
// ---------------------------------------------------------------------

/// Convergence-rate diagnostics on inconsistent overdetermined instances:
/// log-log slope of `||A x~(t) - y_+||^2` over the final decade, the
/// boundedness surrogate for `t * residual`, and monotonicity of the
/// Bregman divergence along the flow.
pub fn run_rate_check(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::RateCheck)?;
    let mut table = ResultTable::new(&[
        ("trial", ColType::Int),
        ("method", ColType::Text),
        ("slope", ColType::Float),
        ("t_resid_final", ColType::Float),
        ("t_resid_peak_first_half", ColType::Float),
        ("bregman_monotone", ColType::Int),
        ("status", ColType::Text),
    ]);

    type Row = (usize, &'static str, f64, f64, f64, i64, String);
    let per_trial = parallel_trials(spec.trials, spec.threads, |trial| -> Result<Vec<Row>> {
        let seed = spec.master_seed + trial as u64;
        let problem = rate_instance(spec, seed)?;
        let layers = spec.layers_list[0];

        let lh = solve_lawson_hanson(&problem, 1e-10, 100 * problem.n() as u64)?;
        let sane = lh.kkt.is_optimal();
        let y_plus = problem.a.matvec(&lh.x_final)?;
        let z_plus = lh.x_final.clone();

        let mut rows = Vec::new();

        let x0 = vec![spec.alpha; problem.n()];
        match solve_flow_rk4(
            &problem,
            layers,
            &x0,
            spec.t_end,
            spec.dt,
            Some(&y_plus),
            Some(&z_plus),
        ) {
            Ok(report) => {
                let points: Vec<(f64, f64)> = report
                    .trace
                    .iter()
                    .map(|p| (p.iter as f64 * spec.dt, p.residual_yplus_sq))
                    .collect();
                let (slope, final_tr, peak_tr) = rate_stats(&points, spec.t_end);
                let monotone = bregman_monotone(&report.trace);
                let status = if sane { "ok" } else { "sanity-kkt" };
                rows.push((trial, "flow", slope, final_tr, peak_tr, monotone, status.into()));
            }
            Err(NnlsError::Divergence { .. }) => {
                rows.push((trial, "flow", f64::NAN, f64::NAN, f64::NAN, -1, "diverged".into()));
            }
            Err(other) => return Err(other),
        }

        let mut cfg = SolverConfig::default_for(problem.n()).with_alpha(spec.alpha);
        cfg.layers = layers;
        cfg.step_rule = StepRule::Constant { eta: spec.eta };
        cfg.max_iters = (spec.t_end / spec.eta).ceil() as u64;
        cfg.grad_tol = 0.0;
        cfg.objective_tol = 0.0;
        cfg.trace_every = (cfg.max_iters / 2000).max(1);
        match solve_gd(&problem, &cfg, Some(&y_plus)) {
            Ok(report) => {
                let points: Vec<(f64, f64)> = report
                    .trace
                    .iter()
                    .map(|p| (p.iter as f64 * spec.eta, p.residual_yplus_sq))
                    .collect();
                let (slope, final_tr, peak_tr) = rate_stats(&points, spec.t_end);
                let status = if sane { "ok" } else { "sanity-kkt" };
                rows.push((trial, "gd", slope, final_tr, peak_tr, -1, status.into()));
            }
            Err(NnlsError::Divergence { .. }) => {
                rows.push((trial, "gd", f64::NAN, f64::NAN, f64::NAN, -1, "diverged".into()));
            }
            Err(other) => return Err(other),
        }
        Ok(rows)
    });
    for trial_rows in per_trial {
        for (trial, method, slope, final_tr, peak_tr, monotone, status) in trial_rows? {
            table.push_row(vec![
                Cell::Int(trial as i64),
                Cell::text(method),
                Cell::Float(slope),
                Cell::Float(final_tr),
                Cell::Float(peak_tr),
                Cell::Int(monotone),
                Cell::text(status),
            ]);
        }
    }
    Ok(table)
}

/// Overdetermined instance with `y` pushed off the range of `A`: dense
/// Gaussian signal plus additive Gaussian noise. Normalized columns and a
/// mild global rescaling keep the flow's decay rates inside the observed
/// time window. `noise = 0` selects the degenerate consistent case: the
/// signal is made nonnegative so `y` lies in the cone and `y_+ = y`.
fn rate_instance(spec: &ExperimentSpec, seed: u64) -> Result<NnlsProblem> {
    let mut a = gen_gaussian_matrix(spec.m, spec.n, seed);
    if spec.normalize_columns {
        a.normalize_columns();
    }
    if spec.scale != 1.0 {
        a.scale(spec.scale);
    }
    let mut rng = det_rng(seed, STREAM_SIGNAL);
    let x_gt: Vec<f64> = (0..spec.n)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            if spec.noise == 0.0 {
                v.abs()
            } else {
                v
            }
        })
        .collect();
    let mut y = a.matvec(&x_gt)?;
    if spec.noise != 0.0 {
        let mut noise_rng = det_rng(seed, STREAM_NOISE);
        for yi in &mut y {
            let e: f64 = noise_rng.sample(StandardNormal);
            *yi += spec.noise * e;
        }
    }
    let mut p = NnlsProblem::new(a, y)?;
    p.seed = Some(seed);
    p.label = format!(
        "rate-check m={} n={} noise={} scale={} seed={seed}",
        spec.m, spec.n, spec.noise, spec.scale
    );
    Ok(p)
}

/// Slope over the final decade plus the `t * residual` statistics.
fn rate_stats(points: &[(f64, f64)], t_end: f64) -> (f64, f64, f64) {
    let window: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(t, _)| *t >= t_end / 10.0)
        .collect();
    let slope = loglog_slope(&window);
    let final_tr = points
        .last()
        .map(|&(t, r)| t * r)
        .unwrap_or(f64::NAN);
    let peak_tr = points
        .iter()
        .filter(|(t, _)| *t > 0.0 && *t <= t_end / 2.0)
        .map(|&(t, r)| t * r)
        .fold(f64::NAN, f64::max);
    (slope, final_tr, peak_tr)
}

/// 1 when the recorded Bregman divergence is non-increasing (up to a
/// 1e-8-scaled slack) over its valid prefix, 0 when violated, -1 when no
/// two consecutive samples exist.
fn bregman_monotone(trace: &[TracePoint]) -> i64 {
    let vals: Vec<f64> = trace
        .iter()
        .map(|p| p.bregman_ref)
        .take_while(|v| v.is_finite())
        .collect();
    if vals.len() < 2 {
        return -1;
    }
    let slack = 1e-8 * vals[0].abs().max(1.0);
    for w in vals.windows(2) {
        if w[1] > w[0] + slack {
            return 0;
        }
    }
    1
}

// ---------------------------------------------------------------------
// timing
// ---------------------------------------------------------------------

/// Wall-clock cost of a fixed iteration budget with precomputed Gram
/// matrices, per method and size. Absolute seconds are machine-specific
/// and only reported, never asserted.
pub fn run_timing(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::Timing)?;
    let mut table = ResultTable::new(&[
        ("size", ColType::Int),
        ("method", ColType::Text),
        ("iters", ColType::Int),
        ("seconds", ColType::Float),
        ("per_iter_seconds", ColType::Float),
        ("status", ColType::Text),
    ]);
    for (size_idx, &size) in spec.sizes.iter().enumerate() {
        let seed = spec.master_seed + size_idx as u64;
        let mut a = gen_gaussian_matrix(size, size, seed);
        a.normalize_columns();
        // sup-normalized dense target: curvature along the descent from
        // x0 = alpha * 1 then peaks at the start, so the sparsely
        // refreshed stepsize stays stable over the whole budget
        let mut x_gt = gen_sparse_nonneg(size, size, seed)?;
        let sup = linalg::sup_norm(&x_gt);
        for v in &mut x_gt {
            *v /= sup;
        }
        let y = a.matvec(&x_gt)?;
        let gram = a.gram();
        let p_vec = a.matvec_t(&y)?;
        for method in ["pgd", "gd-2l", "gd-3l"] {
            let mut seconds: Vec<f64> = Vec::new();
            let mut ok = true;
            for _ in 0..spec.trials {
                let (secs, finite) = match method {
                    "pgd" => timed_pgd_loop(&gram, &p_vec, size, spec),
                    "gd-2l" => timed_gd_loop(&gram, &p_vec, size, 2, spec),
                    _ => timed_gd_loop(&gram, &p_vec, size, 3, spec),
                };
                ok &= finite;
                seconds.push(secs);
            }
            let med = median(seconds);
            table.push_row(vec![
                Cell::Int(size as i64),
                Cell::text(method),
                Cell::Int(spec.max_iters as i64),
                Cell::Float(med),
                Cell::Float(med / spec.max_iters as f64),
                Cell::text(if ok { "ok" } else { "nonfinite" }),
            ]);
        }
    }
    Ok(table)
}

fn timed_pgd_loop(gram: &DenseMatrix, p_vec: &[f64], n: usize, spec: &ExperimentSpec) -> (f64, bool) {
    let est = linalg::spectral_norm_symmetric(gram, 1e-9, 1000);
    let eta = if est.value <= f64::MIN_POSITIVE {
        crate::solvers::DEFAULT_ETA
    } else {
        1.0 / est.value
    };
    let mut x = vec![0.0; n];
    let mut g = vec![0.0; n];
    let start = Instant::now();
    for _ in 0..spec.max_iters {
        gram.matvec_into(&x, &mut g);
        for (gi, &pi) in g.iter_mut().zip(p_vec) {
            *gi -= pi;
        }
        for (xi, &gi) in x.iter_mut().zip(&g) {
            *xi = (*xi - eta * gi).max(0.0);
        }
    }
    (start.elapsed().as_secs_f64(), x.iter().all(|v| v.is_finite()))
}

fn timed_gd_loop(
    gram: &DenseMatrix,
    p_vec: &[f64],
    n: usize,
    layers: u32,
    spec: &ExperimentSpec,
) -> (f64, bool) {
    let l = layers as f64;
    let mut x = vec![spec.alpha; n];
    let mut xt = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut eta = crate::solvers::DEFAULT_ETA;
    let start = Instant::now();
    for iter in 0..spec.max_iters {
        linalg::hadamard_pow_into(&x, layers, &mut xt);
        gram.matvec_into(&xt, &mut s);
        for (si, &pi) in s.iter_mut().zip(p_vec) {
            *si -= pi;
        }
        // iteration-dependent Lipschitz stepsize, refreshed sparsely
        if iter % 1000 == 0 {
            let mut h = DenseMatrix::from_fn(n, n, |i, j| {
                l * l
                    * gram.get(i, j)
                    * x[i].powi(layers as i32 - 1)
                    * x[j].powi(layers as i32 - 1)
            });
            let hdata = h.data_mut();
            for i in 0..n {
                let xl2 = if layers == 2 {
                    1.0
                } else {
                    x[i].powi(layers as i32 - 2)
                };
                hdata[i * n + i] += l * (l - 1.0) * s[i] * xl2;
            }
            let est = linalg::spectral_norm_symmetric(&h, 1e-9, 500);
            eta = if est.value <= f64::MIN_POSITIVE {
                crate::solvers::DEFAULT_ETA
            } else {
                1.0 / est.value
            };
        }
        for i in 0..n {
            x[i] -= eta * s[i] * x[i].powi(layers as i32 - 1);
        }
    }
    (start.elapsed().as_secs_f64(), x.iter().all(|v| v.is_finite()))
}
