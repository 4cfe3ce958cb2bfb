//! `nnls`: generate NNLS instances, solve them with the factorized
//! gradient methods or the classical baselines, check KKT optimality,
//! and run the experiment harness.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. The
//! `NNLS_SEED` environment variable overrides `--seed` when set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nnls_core::experiments::{
    emit_table, run_experiment, Cell, ColType, ExperimentSpec, ResultTable, TableFormat,
};
use nnls_core::objective::kkt_check;
use nnls_core::problem::{
    consistent_sparse_problem, load_problem, q_perturbed_problem, save_problem,
};
use nnls_core::solvers::{
    solve_gd, solve_lawson_hanson, solve_pgd, solve_sgd, SolveReport, StepRule,
};
use nnls_core::{NnlsError, NnlsProblem, SolverConfig};

#[derive(Parser)]
#[command(
    name = "nnls",
    version,
    about = "Non-negative least squares via overparametrized gradient descent",
    long_about = "Generate, solve, and study non-negative least-squares instances.\n\
                  The NNLS_SEED environment variable overrides --seed when set.",
    term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Factorized gradient descent on the overparametrized loss
    Gd,
    /// Stochastic variant with uniform row batches
    Sgd,
    /// Projected gradient descent
    Pgd,
    /// Lawson-Hanson active set
    Lh,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Sgd => "sgd",
            Method::Pgd => "pgd",
            Method::Lh => "lh",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded Gaussian problem instance file
    Generate {
        /// Number of measurement rows M
        #[arg(long, default_value_t = 30)]
        m: usize,
        /// Signal dimension N
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Ground-truth support size
        #[arg(long, default_value_t = 3)]
        sparsity: usize,
        /// Negative corruption level in [0,1]; omit for a clean instance
        #[arg(long)]
        q: Option<f64>,
        /// RNG seed (overridden by NNLS_SEED)
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Rescale measurement columns to unit norm
        #[arg(long, default_value_t = false)]
        normalize: bool,
        /// Output problem file
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a problem instance
    Solve {
        /// Input problem file
        #[arg(long)]
        input: PathBuf,
        /// Solver family
        #[arg(long, value_enum, default_value_t = Method::Gd)]
        method: Method,
        /// Factorization depth L (gd/sgd)
        #[arg(long, default_value_t = 3)]
        layers: u32,
        /// Initialization magnitude: x0 = alpha * 1 (gd/sgd)
        #[arg(long, default_value_t = 1e-2)]
        alpha: f64,
        /// Stepsize rule: const:ETA, bb[:ETA0], lipschitz[:K], nesterov:ETA
        #[arg(long, default_value = "const:0.01")]
        step: String,
        /// Iteration budget
        #[arg(long, default_value_t = 1_000_000)]
        max_iters: u64,
        /// Stop when the gradient sup-norm falls below this (0 disables)
        #[arg(long, default_value_t = 1e-10)]
        grad_tol: f64,
        /// Stop when the objective plateaus within this per trace window (0 disables)
        #[arg(long, default_value_t = 1e-12)]
        objective_tol: f64,
        /// Trace cadence in iterations
        #[arg(long, default_value_t = 100)]
        trace_every: u64,
        /// Batch sampling seed (sgd; overridden by NNLS_SEED)
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows per batch (sgd; default ceil(M/10))
        #[arg(long)]
        batch_size: Option<usize>,
        /// Termination tolerance for pgd (step sup-norm) and lh (dual)
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Write a solution report file
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Write the iteration trace as CSV
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Check KKT optimality of a solution against a problem
    Check {
        /// Input problem file
        #[arg(long)]
        input: PathBuf,
        /// Solution: a report file or whitespace-separated numbers
        #[arg(long)]
        solution: PathBuf,
        /// Certification tolerance
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Run a declarative experiment from a spec file
    Experiment {
        /// Experiment spec file
        #[arg(long)]
        spec: PathBuf,
        /// Write the result table as CSV
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for trials (defaults to the spec's value)
        #[arg(long)]
        threads: Option<usize>,
        /// Stdout rendering
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(), // clap uses 2 for usage errors, 0 for --help/--version
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

impl From<NnlsError> for Failure {
    fn from(e: NnlsError) -> Failure {
        match &e {
            NnlsError::Divergence { iter, trace, .. } => {
                let mut msg = format!("{e}");
                if let Some(last) = trace.last() {
                    msg.push_str(&format!(
                        "\nlast finite trace row: iter {} objective {:.6e} l1 {:.6e} min {:.6e}",
                        last.iter, last.objective, last.l1_norm, last.min_entry
                    ));
                }
                let _ = iter;
                Failure::Runtime(msg)
            }
            _ => Failure::Runtime(format!("{e}")),
        }
    }
}

fn env_seed_override(seed: u64) -> Result<u64, Failure> {
    match std::env::var("NNLS_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map_err(|e| usage(format!("NNLS_SEED={raw:?} is not a valid seed: {e}"))),
        Err(_) => Ok(seed),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            m,
            n,
            sparsity,
            q,
            seed,
            normalize,
            out,
        } => generate(m, n, sparsity, q, seed, normalize, &out),
        Command::Solve {
            input,
            method,
            layers,
            alpha,
            step,
            max_iters,
            grad_tol,
            objective_tol,
            trace_every,
            seed,
            batch_size,
            tol,
            out_report,
            out_trace,
        } => solve(SolveArgs {
            input,
            method,
            layers,
            alpha,
            step,
            max_iters,
            grad_tol,
            objective_tol,
            trace_every,
            seed,
            batch_size,
            tol,
            out_report,
            out_trace,
        }),
        Command::Check {
            input,
            solution,
            tol,
        } => check(&input, &solution, tol),
        Command::Experiment {
            spec,
            out,
            threads,
            format,
        } => experiment(&spec, out.as_deref(), threads, format),
    }
}

fn generate(
    m: usize,
    n: usize,
    sparsity: usize,
    q: Option<f64>,
    seed: u64,
    normalize: bool,
    out: &Path,
) -> Result<(), Failure> {
    if m == 0 || n == 0 {
        return Err(usage("m and n must be positive"));
    }
    if sparsity == 0 || sparsity > n {
        return Err(usage(format!("sparsity must lie in [1, {n}]")));
    }
    if let Some(q) = q {
        if !(0.0..=1.0).contains(&q) {
            return Err(usage(format!("q = {q} outside [0, 1]")));
        }
    }
    let seed = env_seed_override(seed)?;
    println!(
        "config: command=generate m={m} n={n} sparsity={sparsity} q={} seed={seed} normalize={normalize} out={}",
        q.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
        out.display()
    );
    let problem = match q {
        Some(q) => q_perturbed_problem(m, n, sparsity, q, seed, normalize)?,
        None => consistent_sparse_problem(m, n, sparsity, seed, normalize)?,
    };
    save_problem(&problem, out)?;
    println!("wrote {} ({}x{}, label '{}')", out.display(), m, n, problem.label);
    Ok(())
}

struct SolveArgs {
    input: PathBuf,
    method: Method,
    layers: u32,
    alpha: f64,
    step: String,
    max_iters: u64,
    grad_tol: f64,
    objective_tol: f64,
    trace_every: u64,
    seed: u64,
    batch_size: Option<usize>,
    tol: f64,
    out_report: Option<PathBuf>,
    out_trace: Option<PathBuf>,
}

fn parse_step_rule(spec: &str) -> Result<StepRule, Failure> {
    let (head, tail) = match spec.split_once(':') {
        Some((h, t)) => (h, Some(t)),
        None => (spec, None),
    };
    let parse_eta = |t: Option<&str>, what: &str| -> Result<f64, Failure> {
        match t {
            None => Ok(1e-2),
            Some(raw) => raw
                .parse::<f64>()
                .map_err(|e| usage(format!("bad {what} in --step {spec:?}: {e}"))),
        }
    };
    match head {
        "const" => Ok(StepRule::Constant {
            eta: parse_eta(tail, "stepsize")?,
        }),
        "bb" => Ok(StepRule::BarzilaiBorwein {
            eta0: parse_eta(tail, "fallback stepsize")?,
        }),
        "nesterov" => Ok(StepRule::NesterovConstant {
            eta: parse_eta(tail, "stepsize")?,
        }),
        "lipschitz" => {
            let refresh = match tail {
                None => 1000,
                Some(raw) => raw
                    .parse::<u64>()
                    .map_err(|e| usage(format!("bad refresh count in --step {spec:?}: {e}")))?,
            };
            Ok(StepRule::LipschitzOracle {
                refresh_every: refresh,
            })
        }
        other => Err(usage(format!(
            "unknown step rule '{other}' (expected const, bb, lipschitz, nesterov)"
        ))),
    }
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    if args.layers < 2 {
        return Err(usage("layers must be >= 2"));
    }
    if !(args.alpha > 0.0) {
        return Err(usage("alpha must be > 0"));
    }
    if args.max_iters == 0 || args.trace_every == 0 {
        return Err(usage("max-iters and trace-every must be >= 1"));
    }
    if !(args.tol > 0.0) {
        return Err(usage("tol must be > 0"));
    }
    let step_rule = parse_step_rule(&args.step)?;
    let seed = env_seed_override(args.seed)?;
    println!(
        "config: command=solve input={} method={} layers={} alpha={} step={} max-iters={} \
         grad-tol={} objective-tol={} trace-every={} seed={seed} batch-size={} tol={}",
        args.input.display(),
        args.method.as_str(),
        args.layers,
        args.alpha,
        step_rule.describe(),
        args.max_iters,
        args.grad_tol,
        args.objective_tol,
        args.trace_every,
        args.batch_size
            .map(|b| b.to_string())
            .unwrap_or_else(|| "auto".into()),
        args.tol
    );
    let problem = load_problem(&args.input)?;
    if let Some(b) = args.batch_size {
        if b == 0 || b > problem.m() {
            return Err(usage(format!(
                "batch-size must lie in [1, {}]",
                problem.m()
            )));
        }
    }
    let mut cfg = SolverConfig::default_for(problem.n()).with_alpha(args.alpha);
    cfg.layers = args.layers;
    cfg.step_rule = step_rule;
    cfg.max_iters = args.max_iters;
    cfg.grad_tol = args.grad_tol;
    cfg.objective_tol = args.objective_tol;
    cfg.trace_every = args.trace_every;
    cfg.seed = seed;
    cfg.batch_size = args.batch_size;

    let report = match args.method {
        Method::Gd => solve_gd(&problem, &cfg, None)?,
        Method::Sgd => solve_sgd(&problem, &cfg)?,
        Method::Pgd => solve_pgd(&problem, &cfg.step_rule, args.max_iters, args.tol)?,
        Method::Lh => solve_lawson_hanson(&problem, args.tol, args.max_iters)?,
    };
    print_report_summary(args.method, &report);
    if let Some(path) = &args.out_report {
        write_report(&report, args.method, path)?;
        println!("wrote report {}", path.display());
    }
    if let Some(path) = &args.out_trace {
        trace_table(&report).write_csv(path)?;
        println!("wrote trace {}", path.display());
    }
    Ok(())
}

fn print_report_summary(method: Method, report: &SolveReport) {
    println!(
        "{}: objective {:.12e} after {} iterations (stop: {})",
        method.as_str(),
        report.objective_final,
        report.iterations,
        report.stop_reason
    );
    println!(
        "kkt: primal {:.3e} dual {:.3e} complementarity {:.3e} (optimal at {:.0e}: {})",
        report.kkt.primal_violation,
        report.kkt.dual_violation,
        report.kkt.complementarity,
        report.kkt.tol,
        report.kkt.is_optimal()
    );
    if report.sign_flips > 0 {
        println!("sign flips detected: {} (vanilla descent does not clamp)", report.sign_flips);
    }
    if report.rank_fallback {
        println!("rank-deficient passive set encountered; pivoted fallback used");
    }
}

const REPORT_MAGIC: &str = "nnls report v1";

fn write_report(report: &SolveReport, method: Method, path: &Path) -> Result<(), Failure> {
    let mut out = String::new();
    out.push_str(REPORT_MAGIC);
    out.push('\n');
    out.push_str(&format!("method {}\n", method.as_str()));
    out.push_str(&format!("stop_reason {}\n", report.stop_reason));
    out.push_str(&format!("iterations {}\n", report.iterations));
    out.push_str(&format!("objective {:.16e}\n", report.objective_final));
    out.push_str(&format!("kkt_primal {:.16e}\n", report.kkt.primal_violation));
    out.push_str(&format!("kkt_dual {:.16e}\n", report.kkt.dual_violation));
    out.push_str(&format!(
        "kkt_complementarity {:.16e}\n",
        report.kkt.complementarity
    ));
    out.push_str(&format!("sign_flips {}\n", report.sign_flips));
    out.push_str(&format!("rank_fallback {}\n", report.rank_fallback as u8));
    let xs: Vec<String> = report.x_final.iter().map(|v| format!("{v:.16e}")).collect();
    out.push_str(&format!("x_final {}\n", xs.join(" ")));
    std::fs::write(path, out).map_err(NnlsError::Io)?;
    Ok(())
}

fn trace_table(report: &SolveReport) -> ResultTable {
    let mut table = ResultTable::new(&[
        ("iter", ColType::Int),
        ("objective", ColType::Float),
        ("residual_yplus_sq", ColType::Float),
        ("bregman_ref", ColType::Float),
        ("l1_norm", ColType::Float),
        ("min_entry", ColType::Float),
        ("stepsize", ColType::Float),
        ("wall_seconds", ColType::Float),
    ]);
    for p in &report.trace {
        table.push_row(vec![
            Cell::Int(p.iter as i64),
            Cell::Float(p.objective),
            Cell::Float(p.residual_yplus_sq),
            Cell::Float(p.bregman_ref),
            Cell::Float(p.l1_norm),
            Cell::Float(p.min_entry),
            Cell::Float(p.stepsize),
            Cell::Float(p.wall_seconds),
        ]);
    }
    table
}

/// Accepts either a report file (`x_final` field) or a bare list of
/// whitespace-separated numbers.
fn load_solution(path: &Path, n: usize) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(NnlsError::Io)?;
    let x = if text.starts_with(REPORT_MAGIC) {
        let line = text
            .lines()
            .find(|l| l.starts_with("x_final "))
            .ok_or_else(|| Failure::Runtime(format!("{}: no x_final field", path.display())))?;
        parse_floats(line.trim_start_matches("x_final "))
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?
    } else {
        parse_floats(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?
    };
    if x.len() != n {
        return Err(Failure::Runtime(format!(
            "solution has {} entries but the problem has {n} columns",
            x.len()
        )));
    }
    Ok(x)
}

fn parse_floats(raw: &str) -> Result<Vec<f64>, String> {
    raw.split_whitespace()
        .enumerate()
        .map(|(i, tok)| {
            tok.parse::<f64>()
                .map_err(|e| format!("token {}: {e}", i + 1))
        })
        .collect()
}

fn check(input: &Path, solution: &Path, tol: f64) -> Result<(), Failure> {
    if !(tol > 0.0) {
        return Err(usage("tol must be > 0"));
    }
    println!(
        "config: command=check input={} solution={} tol={tol}",
        input.display(),
        solution.display()
    );
    let problem: NnlsProblem = load_problem(input)?;
    let x = load_solution(solution, problem.n())?;
    let report = kkt_check(&problem.a, &problem.y, &x, tol)?;
    println!("primal_violation {:.16e}", report.primal_violation);
    println!("dual_violation {:.16e}", report.dual_violation);
    println!("complementarity {:.16e}", report.complementarity);
    println!("optimal: {} (tol {tol:.0e})", report.is_optimal());
    Ok(())
}

fn experiment(
    spec_path: &Path,
    out: Option<&Path>,
    threads: Option<usize>,
    format: OutputFormat,
) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::load(spec_path)?;
    if let Some(t) = threads {
        if t == 0 {
            return Err(usage("threads must be >= 1"));
        }
        spec.threads = t;
    }
    println!("config: command=experiment {}", spec.to_line());
    let table = run_experiment(&spec)?;
    match format {
        OutputFormat::Text => print!("{}", table.to_humane_string()),
        OutputFormat::Csv => print!("{}", table.to_csv_string()),
    }
    if let Some(path) = out {
        emit_table(&table, path, TableFormat::Csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
