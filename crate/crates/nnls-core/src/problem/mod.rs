//! Reproducible generation and persistence of NNLS problem instances.
//!
//! All randomness flows through a counter-based generator keyed by
//! `(seed, stream)`: the same arguments always produce the same instance
//! within this implementation. Distinct streams keep the matrix, the
//! signal, the noise, and solver-side sampling independent.

mod io;

pub use io::{load_problem, save_problem};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{NnlsError, Result};
use crate::linalg::{self, DenseMatrix};

pub const STREAM_MATRIX: u64 = 0;
pub const STREAM_SIGNAL: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_SGD: u64 = 3;

/// Deterministic stream-indexed generator.
pub fn det_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// An NNLS instance `(A, y)` with optional ground-truth decomposition.
///
/// When the `x_plus`/`x_minus` split is present the invariants of the
/// q-perturbed construction hold: both parts are nonnegative with
/// disjoint supports, `||x_plus||^2 = 1 - q` and `||x_minus||^2 = q`.
#[derive(Debug, Clone, PartialEq)]
pub struct NnlsProblem {
    pub a: DenseMatrix,
    pub y: Vec<f64>,
    pub x_true: Option<Vec<f64>>,
    pub x_plus: Option<Vec<f64>>,
    pub x_minus: Option<Vec<f64>>,
    pub q: Option<f64>,
    pub seed: Option<u64>,
    pub label: String,
}

const NORM_SPLIT_TOL: f64 = 1e-10;

impl NnlsProblem {
    pub fn new(a: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        let p = NnlsProblem {
            a,
            y,
            x_true: None,
            x_plus: None,
            x_minus: None,
            q: None,
            seed: None,
            label: String::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Checks every structural invariant; loaders call this on every file.
    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.a.rows() {
            return Err(NnlsError::Validation(format!(
                "y has length {} but A has {} rows",
                self.y.len(),
                self.a.rows()
            )));
        }
        if let Some(pos) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(NnlsError::Validation(format!("y[{pos}] is not finite")));
        }
        let n = self.a.cols();
        for (name, v) in [
            ("x_true", &self.x_true),
            ("x_plus", &self.x_plus),
            ("x_minus", &self.x_minus),
        ] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(NnlsError::Validation(format!(
                        "{name} has length {} but A has {n} columns",
                        v.len()
                    )));
                }
                if let Some(pos) = v.iter().position(|e| !e.is_finite()) {
                    return Err(NnlsError::Validation(format!("{name}[{pos}] is not finite")));
                }
            }
        }
        if let Some(q) = self.q {
            if !(0.0..=1.0).contains(&q) {
                return Err(NnlsError::Validation(format!("q = {q} outside [0, 1]")));
            }
        }
        if let (Some(xp), Some(xm)) = (&self.x_plus, &self.x_minus) {
            let q = self.q.ok_or_else(|| {
                NnlsError::Validation("x_plus/x_minus present but q missing".into())
            })?;
            for (name, v) in [("x_plus", xp), ("x_minus", xm)] {
                if v.iter().any(|&e| e < 0.0) {
                    return Err(NnlsError::Validation(format!("{name} has negative entries")));
                }
            }
            if xp.iter().zip(xm).any(|(&p, &m)| p != 0.0 && m != 0.0) {
                return Err(NnlsError::Validation(
                    "x_plus and x_minus have overlapping supports".into(),
                ));
            }
            let np = linalg::norm_sq(xp);
            let nm = linalg::norm_sq(xm);
            if (np - (1.0 - q)).abs() > NORM_SPLIT_TOL {
                return Err(NnlsError::Validation(format!(
                    "||x_plus||^2 = {np} but 1 - q = {}",
                    1.0 - q
                )));
            }
            if (nm - q).abs() > NORM_SPLIT_TOL {
                return Err(NnlsError::Validation(format!(
                    "||x_minus||^2 = {nm} but q = {q}"
                )));
            }
        }
        Ok(())
    }
}

/// M x N matrix of i.i.d. standard normals, deterministic in the seed.
pub fn gen_gaussian_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut rng = det_rng(seed, STREAM_MATRIX);
    let data: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::new(m, n, data).expect("gaussian entries are finite")
}

/// Vector with exactly `s` nonzeros on a uniformly chosen support, each
/// the absolute value of a standard normal.
pub fn gen_sparse_nonneg(n: usize, s: usize, seed: u64) -> Result<Vec<f64>> {
    if s == 0 || s > n {
        return Err(NnlsError::domain(format!(
            "sparsity {s} outside [1, {n}]"
        )));
    }
    let mut rng = det_rng(seed, STREAM_SIGNAL);
    // partial Fisher-Yates for a uniform s-subset
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..s {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut support: Vec<usize> = idx[..s].to_vec();
    support.sort_unstable();
    let mut x = vec![0.0; n];
    for &i in &support {
        let v: f64 = rng.sample(StandardNormal);
        x[i] = v.abs();
    }
    Ok(x)
}

/// Splits a nonnegative signal into the q-perturbed decomposition
/// `(x_true, x_plus, x_minus)`: `x_plus` is `x_plus_raw` rescaled to
/// `||x_plus||^2 = 1 - q`, `x_minus` has |N(0,1)| entries off the raw
/// support rescaled to `||x_minus||^2 = q`, and `x_true = x_plus - x_minus`.
pub fn make_q_perturbed(
    x_plus_raw: &[f64],
    q: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&q) {
        return Err(NnlsError::domain(format!("q = {q} outside [0, 1]")));
    }
    if x_plus_raw.iter().any(|&v| v < 0.0) {
        return Err(NnlsError::domain("x_plus_raw has negative entries"));
    }
    let n = x_plus_raw.len();
    let raw_sq = linalg::norm_sq(x_plus_raw);
    if raw_sq == 0.0 && q < 1.0 {
        return Err(NnlsError::domain(
            "x_plus_raw is all zero but q < 1 requires positive mass",
        ));
    }
    let x_plus: Vec<f64> = if raw_sq == 0.0 {
        vec![0.0; n]
    } else {
        let c = ((1.0 - q) / raw_sq).sqrt();
        x_plus_raw.iter().map(|&v| v * c).collect()
    };
    let off_support: Vec<usize> = (0..n).filter(|&i| x_plus_raw[i] == 0.0).collect();
    let mut x_minus = vec![0.0; n];
    if q > 0.0 {
        if off_support.is_empty() {
            return Err(NnlsError::domain(
                "x_plus_raw has full support; no room for off-support noise with q > 0",
            ));
        }
        let mut rng = det_rng(seed, STREAM_NOISE);
        let mut sq = 0.0;
        for &i in &off_support {
            let v: f64 = rng.sample(StandardNormal);
            let v = v.abs();
            x_minus[i] = v;
            sq += v * v;
        }
        let c = (q / sq).sqrt();
        for &i in &off_support {
            x_minus[i] *= c;
        }
    }
    let x_true: Vec<f64> = x_plus.iter().zip(&x_minus).map(|(&p, &m)| p - m).collect();
    Ok((x_true, x_plus, x_minus))
}

/// Consistent instance `y = A x_gt` with an unscaled s-sparse nonnegative
/// ground truth stored in `x_true` (and mirrored to `x_plus` with `q = 0`
/// semantics left absent).
pub fn consistent_sparse_problem(
    m: usize,
    n: usize,
    s: usize,
    seed: u64,
    normalize_columns: bool,
) -> Result<NnlsProblem> {
    let mut a = gen_gaussian_matrix(m, n, seed);
    if normalize_columns {
        a.normalize_columns();
    }
    let x_gt = gen_sparse_nonneg(n, s, seed)?;
    let y = a.matvec(&x_gt)?;
    let label = format!(
        "gaussian m={m} n={n} s={s} seed={seed} normalize={}",
        normalize_columns as u8
    );
    let mut p = NnlsProblem::new(a, y)?;
    p.x_true = Some(x_gt);
    p.seed = Some(seed);
    p.label = label;
    Ok(p)
}

/// Consistent instance whose sparse nonnegative ground truth is rescaled
/// to unit Euclidean norm, the scaling the benchmark experiments use.
pub fn consistent_unit_sparse_problem(
    m: usize,
    n: usize,
    s: usize,
    seed: u64,
    normalize_columns: bool,
) -> Result<NnlsProblem> {
    let mut a = gen_gaussian_matrix(m, n, seed);
    if normalize_columns {
        a.normalize_columns();
    }
    let mut x_gt = gen_sparse_nonneg(n, s, seed)?;
    let norm = linalg::norm2(&x_gt);
    for v in &mut x_gt {
        *v /= norm;
    }
    let y = a.matvec(&x_gt)?;
    let label = format!(
        "gaussian-unit m={m} n={n} s={s} seed={seed} normalize={}",
        normalize_columns as u8
    );
    let mut p = NnlsProblem::new(a, y)?;
    p.x_true = Some(x_gt);
    p.seed = Some(seed);
    p.label = label;
    Ok(p)
}

/// q-perturbed instance per the stability experiment: sparse nonnegative
/// part plus dense off-support negative corruption, `y = A (x_+ - x_-)`.
pub fn q_perturbed_problem(
    m: usize,
    n: usize,
    s: usize,
    q: f64,
    seed: u64,
    normalize_columns: bool,
) -> Result<NnlsProblem> {
    let mut a = gen_gaussian_matrix(m, n, seed);
    if normalize_columns {
        a.normalize_columns();
    }
    let raw = gen_sparse_nonneg(n, s, seed)?;
    let (x_true, x_plus, x_minus) = make_q_perturbed(&raw, q, seed)?;
    let y = a.matvec(&x_true)?;
    let label = format!(
        "gaussian-q m={m} n={n} s={s} q={q} seed={seed} normalize={}",
        normalize_columns as u8
    );
    let mut p = NnlsProblem::new(a, y)?;
    p.x_true = Some(x_true);
    p.x_plus = Some(x_plus);
    p.x_minus = Some(x_minus);
    p.q = Some(q);
    p.seed = Some(seed);
    p.label = label;
    p.validate()?;
    Ok(p)
}

/// Smooth dense nonnegative vector standing in for image-like signals in
/// the stability experiment: a clamped mixture of a few seeded cosine
/// bumps, so the vector is dense, nonnegative, and reproducible.
pub fn gen_dense_nonneg(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = det_rng(seed, STREAM_SIGNAL);
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let amp: f64 = rng.gen_range(0.5..1.5);
            let freq: f64 = rng.gen_range(1.0..6.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (amp, freq, phase)
        })
        .collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let v: f64 = waves
                .iter()
                .map(|(a, f, p)| a * (std::f64::consts::TAU * f * t + p).cos())
                .sum();
            v.max(0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_matrix_is_deterministic() {
        let a = gen_gaussian_matrix(2, 3, 7);
        let b = gen_gaussian_matrix(2, 3, 7);
        assert_eq!(a, b);
        let c = gen_gaussian_matrix(2, 3, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_matrix_moments() {
        let a = gen_gaussian_matrix(100, 100, 1);
        let mean = a.data().iter().sum::<f64>() / 10_000.0;
        let var = a.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((0.8..1.2).contains(&var), "variance {var}");
    }

    #[test]
    fn gaussian_matrix_single_entry() {
        let a = gen_gaussian_matrix(1, 1, 3);
        assert!(a.data()[0].is_finite());
    }

    #[test]
    fn sparse_nonneg_support_size() {
        let x = gen_sparse_nonneg(50, 3, 11).unwrap();
        let nnz: Vec<&f64> = x.iter().filter(|&&v| v != 0.0).collect();
        assert_eq!(nnz.len(), 3);
        assert!(nnz.iter().all(|&&v| v > 0.0));
    }

    #[test]
    fn sparse_nonneg_full_support() {
        let x = gen_sparse_nonneg(5, 5, 2).unwrap();
        assert!(x.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn sparse_nonneg_deterministic_and_bounded() {
        assert_eq!(
            gen_sparse_nonneg(20, 4, 9).unwrap(),
            gen_sparse_nonneg(20, 4, 9).unwrap()
        );
        assert!(matches!(
            gen_sparse_nonneg(3, 4, 0),
            Err(NnlsError::Domain(_))
        ));
    }

    #[test]
    fn q_split_boundaries() {
        let raw = gen_sparse_nonneg(10, 3, 5).unwrap();
        let (xt, xp, xm) = make_q_perturbed(&raw, 0.0, 5).unwrap();
        assert_eq!(xm, vec![0.0; 10]);
        assert_eq!(xt, xp);
        assert!((linalg::norm_sq(&xp) - 1.0).abs() < 1e-12);

        let (_, xp, xm) = make_q_perturbed(&raw, 1.0, 5).unwrap();
        assert_eq!(xp, vec![0.0; 10]);
        assert!((linalg::norm_sq(&xm) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_split_midpoint() {
        let raw = gen_sparse_nonneg(10, 3, 5).unwrap();
        let (_, xp, xm) = make_q_perturbed(&raw, 0.5, 5).unwrap();
        assert!((linalg::norm_sq(&xp) - 0.5).abs() < 1e-10);
        assert!((linalg::norm_sq(&xm) - 0.5).abs() < 1e-10);
        assert!(xp.iter().zip(&xm).all(|(&p, &m)| p == 0.0 || m == 0.0));
    }

    #[test]
    fn q_split_rejects_bad_input() {
        assert!(matches!(
            make_q_perturbed(&[0.0, 0.0], 0.5, 1),
            Err(NnlsError::Domain(_))
        ));
        assert!(matches!(
            make_q_perturbed(&[1.0, 1.0], 0.5, 1),
            Err(NnlsError::Domain(_))
        ));
        assert!(matches!(
            make_q_perturbed(&[1.0, 0.0], 1.5, 1),
            Err(NnlsError::Domain(_))
        ));
    }

    #[test]
    fn dense_nonneg_signal() {
        let x = gen_dense_nonneg(64, 3);
        assert_eq!(x.len(), 64);
        assert!(x.iter().all(|&v| v >= 0.0));
        assert!(x.iter().any(|&v| v > 0.0));
        assert_eq!(x, gen_dense_nonneg(64, 3));
    }
}
