//! Shared instance builders for the benchmark targets.

use nnls_core::problem::{consistent_unit_sparse_problem, q_perturbed_problem};
use nnls_core::solvers::StepRule;
use nnls_core::{NnlsProblem, SolverConfig};

pub const BENCH_SEED: u64 = 20_240_817;

/// Consistent benchmark instance with normalized columns and a unit-norm
/// sparse ground truth.
pub fn race_style_instance(m: usize, n: usize, s: usize) -> NnlsProblem {
    consistent_unit_sparse_problem(m, n, s, BENCH_SEED, true).expect("valid dims")
}

/// Corrupted instance as used by the stability study.
pub fn corrupted_instance(m: usize, n: usize, s: usize, q: f64) -> NnlsProblem {
    q_perturbed_problem(m, n, s, q, BENCH_SEED, false).expect("valid dims")
}

/// Short fixed-budget configuration so solver benchmarks measure
/// per-iteration cost rather than convergence luck.
pub fn fixed_budget_config(n: usize, layers: u32, iters: u64) -> SolverConfig {
    let mut cfg = SolverConfig::default_for(n);
    cfg.layers = layers;
    cfg.step_rule = StepRule::Constant { eta: 1e-2 };
    cfg.max_iters = iters;
    cfg.grad_tol = 0.0;
    cfg.objective_tol = 0.0;
    cfg.trace_every = iters.max(1);
    cfg
}
