//! Randomized invariants of the linear-algebra and objective layers.

use nnls_core::linalg::{self, DenseMatrix};
use nnls_core::objective::{bregman_divergence, nnls_objective};
use proptest::prelude::*;

fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0_f64, len)
}

fn positive_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05..4.0_f64, len)
}

proptest! {
    // <Ax, v> == <x, A^T v>
    #[test]
    fn adjoint_identity(
        (m, n) in (1usize..7, 1usize..7),
        seed_data in prop::collection::vec(-5.0..5.0_f64, 100),
    ) {
        let a = DenseMatrix::from_fn(m, n, |i, j| seed_data[(i * n + j) % seed_data.len()]);
        let x: Vec<f64> = (0..n).map(|j| seed_data[(7 * j + 3) % seed_data.len()]).collect();
        let v: Vec<f64> = (0..m).map(|i| seed_data[(11 * i + 5) % seed_data.len()]).collect();
        let lhs = linalg::dot(&a.matvec(&x).unwrap(), &v);
        let rhs = linalg::dot(&x, &a.matvec_t(&v).unwrap());
        // absolute-mass scale keeps the relative comparison meaningful
        // when the inner products nearly cancel
        let mut mass = 1e-30;
        for i in 0..m {
            for j in 0..n {
                mass += (a.get(i, j) * x[j] * v[i]).abs();
            }
        }
        prop_assert!((lhs - rhs).abs() <= 1e-12 * mass, "{lhs} vs {rhs}");
    }

    // x^{.(p+q)} == x^{.p} .* x^{.q} for positive x
    #[test]
    fn hadamard_power_additivity(
        x in positive_vec(6),
        p in 1u32..5,
        q in 1u32..5,
    ) {
        let lhs = linalg::hadamard_pow(&x, p + q);
        let rhs = linalg::hadamard(
            &linalg::hadamard_pow(&x, p),
            &linalg::hadamard_pow(&x, q),
        );
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() <= 1e-12 * r.abs().max(1e-300));
        }
    }

    // ||A^T A||_2 dominates every Rayleigh-style probe
    #[test]
    fn spectral_norm_dominates_probes(
        data in prop::collection::vec(-3.0..3.0_f64, 20),
        probe in finite_vec(4),
    ) {
        let a = DenseMatrix::from_fn(5, 4, |i, j| data[i * 4 + j]);
        let norm_u = linalg::norm2(&probe);
        prop_assume!(norm_u > 1e-6);
        let est = linalg::gram_spectral_norm(&a, 1e-12, 100_000).unwrap();
        let au = a.matvec(&probe).unwrap();
        let atau = a.matvec_t(&au).unwrap();
        let bound = linalg::norm2(&atau) / norm_u;
        prop_assert!(est.value >= bound * (1.0 - 1e-8), "{} < {}", est.value, bound);
    }

    // D_F(p, q) >= 0 with equality exactly on the diagonal
    #[test]
    fn bregman_nonnegative_and_separating(
        p in positive_vec(5),
        q in positive_vec(5),
        layers in 2u32..6,
    ) {
        let d = bregman_divergence(&p, &q, layers).unwrap();
        prop_assert!(d >= -1e-14, "negative divergence {d}");
        if d < 1e-12 {
            let gap = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(gap < 1e-6, "divergence {d} but gap {gap}");
        }
        let self_d = bregman_divergence(&p, &p, layers).unwrap();
        prop_assert!(self_d == 0.0);
    }

    // the objective is a true squared norm: nonnegative, zero iff Az == y
    #[test]
    fn objective_is_squared_residual(
        data in prop::collection::vec(-3.0..3.0_f64, 12),
        z in finite_vec(3),
    ) {
        let a = DenseMatrix::from_fn(4, 3, |i, j| data[i * 3 + j]);
        let y = a.matvec(&z).unwrap();
        let exact = nnls_objective(&a, &y, &z).unwrap();
        prop_assert!(exact == 0.0);
        let mut y2 = y.clone();
        y2[0] += 1.0;
        let shifted = nnls_objective(&a, &y2, &z).unwrap();
        prop_assert!((shifted - 1.0).abs() <= 1e-9);
    }
}
