//! End-to-end checks of the `nnls` binary: subcommand round trips, exit
//! codes, help snapshots, and the NNLS_SEED override.

use std::path::Path;
use std::process::{Command, Output};

use nnls_core::linalg::DenseMatrix;
use nnls_core::problem::save_problem;
use nnls_core::NnlsProblem;

fn nnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnls"))
        .args(args)
        .env_remove("NNLS_SEED")
        .output()
        .expect("binary runs")
}

fn nnls_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnls"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_clamp_problem(path: &Path) {
    // A = I2, y = (1, -1): the NNLS optimum is the clamp (1, 0)
    let p = NnlsProblem::new(DenseMatrix::identity(2), vec![1.0, -1.0]).unwrap();
    save_problem(&p, path).unwrap();
}

#[test]
fn lawson_hanson_clamp_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("p.txt");
    let report = dir.path().join("r.txt");
    write_clamp_problem(&problem);

    let out = nnls(&[
        "solve",
        "--input",
        problem.to_str().unwrap(),
        "--method",
        "lh",
        "--out-report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("config: command=solve"), "{text}");
    assert!(text.contains("optimal at 1e-8: true"), "{text}");

    let report_text = std::fs::read_to_string(&report).unwrap();
    let xline = report_text
        .lines()
        .find(|l| l.starts_with("x_final"))
        .unwrap();
    let xs: Vec<f64> = xline
        .trim_start_matches("x_final ")
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert!((xs[0] - 1.0).abs() < 1e-12 && xs[1].abs() < 1e-12, "{xs:?}");

    let out = nnls(&[
        "check",
        "--input",
        problem.to_str().unwrap(),
        "--solution",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("primal_violation"), "{text}");
    assert!(text.contains("dual_violation"), "{text}");
    assert!(text.contains("complementarity"), "{text}");
    assert!(text.contains("optimal: true"), "{text}");
}

#[test]
fn check_accepts_raw_number_solutions() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("p.txt");
    let solution = dir.path().join("x.txt");
    write_clamp_problem(&problem);
    std::fs::write(&solution, "1.0 0.0\n").unwrap();
    let out = nnls(&[
        "check",
        "--input",
        problem.to_str().unwrap(),
        "--solution",
        solution.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("optimal: true"));
}

#[test]
fn invalid_layers_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("p.txt");
    write_clamp_problem(&problem);
    let out = nnls(&[
        "solve",
        "--input",
        problem.to_str().unwrap(),
        "--method",
        "gd",
        "--layers",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("layers must be >= 2"), "{err}");
}

#[test]
fn unknown_flag_is_rejected_with_exit_2() {
    let out = nnls(&["generate", "--bogus", "3", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_a_runtime_failure() {
    let out = nnls(&["solve", "--input", "/nonexistent/p.txt", "--method", "gd"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generate_is_byte_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for path in [&a, &b] {
        let out = nnls(&[
            "generate", "--m", "6", "--n", "9", "--sparsity", "2", "--q", "0.4", "--seed", "11",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "same flags must produce identical bytes"
    );
}

#[test]
fn nnls_seed_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let flagged = dir.path().join("flagged.txt");
    let enved = dir.path().join("enved.txt");
    let direct = dir.path().join("direct.txt");
    let base = ["generate", "--m", "4", "--n", "6", "--sparsity", "2"];

    let mut args = base.to_vec();
    args.extend(["--seed", "3", "--out", flagged.to_str().unwrap()]);
    assert!(nnls(&args).status.success());

    let mut args = base.to_vec();
    args.extend(["--seed", "3", "--out", enved.to_str().unwrap()]);
    assert!(nnls_with_env(&args, "NNLS_SEED", "99").status.success());

    let mut args = base.to_vec();
    args.extend(["--seed", "99", "--out", direct.to_str().unwrap()]);
    assert!(nnls(&args).status.success());

    assert_ne!(std::fs::read(&flagged).unwrap(), std::fs::read(&enved).unwrap());
    assert_eq!(std::fs::read(&direct).unwrap(), std::fs::read(&enved).unwrap());
}

#[test]
fn experiment_runs_spec_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.txt");
    let csv = dir.path().join("out.csv");
    std::fs::write(&spec, "nnls experiment v1\nkind timing\nsizes 12\ntrials 1\nmax_iters 50\n")
        .unwrap();
    let out = nnls(&[
        "experiment",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("config: command=experiment kind=timing"));
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("# nnls-table v1"));
    assert!(csv_text.contains("size,method,iters"));
}

#[test]
fn solve_writes_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("p.txt");
    let trace = dir.path().join("trace.csv");
    write_clamp_problem(&problem);
    let out = nnls(&[
        "solve",
        "--input",
        problem.to_str().unwrap(),
        "--method",
        "gd",
        "--layers",
        "2",
        "--max-iters",
        "5000",
        "--out-trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.contains("iter,objective,residual_yplus_sq"), "{text}");
    assert!(text.lines().filter(|l| !l.starts_with('#')).count() > 2);
}

// Help snapshots: every flag with its default must be listed.
#[test]
fn help_lists_all_flags_with_defaults() {
    let cases: [(&str, &[&str]); 4] = [
        (
            "generate",
            &[
                "--m",
                "[default: 30]",
                "--n",
                "[default: 50]",
                "--sparsity",
                "[default: 3]",
                "--q",
                "--seed",
                "[default: 7]",
                "--normalize",
                "--out",
            ],
        ),
        (
            "solve",
            &[
                "--input",
                "--method",
                "[default: gd]",
                "--layers",
                "[default: 3]",
                "--alpha",
                "[default: 0.01]",
                "--step",
                "[default: const:0.01]",
                "--max-iters",
                "[default: 1000000]",
                "--grad-tol",
                "[default: 0.0000000001]",
                "--objective-tol",
                "--trace-every",
                "[default: 100]",
                "--seed",
                "[default: 0]",
                "--batch-size",
                "--tol",
                "--out-report",
                "--out-trace",
            ],
        ),
        ("check", &["--input", "--solution", "--tol", "[default: 0.00000001]"]),
        (
            "experiment",
            &["--spec", "--out", "--threads", "--format", "[default: text]"],
        ),
    ];
    for (sub, expected) in cases {
        let out = nnls(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
        let text = stdout(&out);
        for needle in expected {
            assert!(
                text.contains(needle),
                "`{sub} --help` is missing {needle:?}:\n{text}"
            );
        }
    }
}
