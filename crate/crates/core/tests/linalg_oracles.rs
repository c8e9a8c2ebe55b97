//! Cross-checks of the in-crate SVD and eigenvalue routines against
//! independent implementations (nalgebra, and a one-sided Jacobi SVD that
//! lives only here).

use nalgebra::DMatrix;
use proptest::prelude::*;
use rankkeeper_core::linalg::{eigen_moduli, numerical_rank, singular_values, Matrix, RankConfig};
use rankkeeper_core::rng::SeededRng;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// One-sided Jacobi (Hestenes) on the columns of a tall copy.
fn jacobi_singular_values(m: &Matrix) -> Vec<f64> {
    let a = if m.rows() >= m.cols() { m.clone() } else { m.transpose() };
    let (rows, cols) = a.shape();
    let mut c: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| a.get(i, j)).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = c[p].iter().map(|v| v * v).sum();
                let beta: f64 = c[q].iter().map(|v| v * v).sum();
                let gamma: f64 = c[p].iter().zip(&c[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..rows {
                    let x = c[p][i];
                    let y = c[q][i];
                    c[p][i] = cs * x - sn * y;
                    c[q][i] = sn * x + cs * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = c.iter().map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    SeededRng::new(seed).normal_matrix(rows, cols, 0.0, 1.0)
}

#[test]
fn svd_matches_nalgebra_and_jacobi() {
    for (seed, (r, c)) in [(3, 5), (5, 3), (10, 10), (40, 17), (100, 100), (1, 6)].into_iter().enumerate() {
        let m = random(r, c, seed as u64);
        let ours = singular_values(&m).unwrap();
        let mut theirs: Vec<f64> = to_na(&m).singular_values().iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        let jac = jacobi_singular_values(&m);
        for ((a, b), j) in ours.iter().zip(&theirs).zip(&jac) {
            assert!((a - b).abs() <= 1e-10 * ours[0], "{r}x{c}: {a} vs nalgebra {b}");
            assert!((a - j).abs() <= 1e-10 * ours[0], "{r}x{c}: {a} vs jacobi {j}");
        }
    }
}

#[test]
fn known_spectrum_relative_accuracy() {
    // Q1 · diag(s) · Q2ᵀ with orthogonal factors from QR of Gaussian matrices
    let n = 30;
    let s: Vec<f64> = (0..n).map(|i| 10f64.powf(-(i as f64) / 6.0)).collect();
    let q1 = to_na(&random(n, n, 1)).qr().q();
    let q2 = to_na(&random(n, n, 2)).qr().q();
    let a = &q1 * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone())) * q2.transpose();
    let m = Matrix::from_vec(n, n, a.transpose().as_slice().to_vec()).unwrap();
    let sv = singular_values(&m).unwrap();
    for (got, want) in sv.iter().zip(&s) {
        assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
    }
}

#[test]
fn softmax_of_gaussian_scores_seed_zero() {
    let scores = random(10, 10, 0);
    let map = scores.softmax_rows().unwrap();
    let ours = eigen_moduli(&map, 2).unwrap();
    let mut theirs: Vec<f64> = to_na(&map).complex_eigenvalues().iter().map(|z| z.norm()).collect();
    theirs.sort_by(|a, b| b.total_cmp(a));
    assert!((ours[0] - 1.0).abs() < 1e-9);
    assert!(ours[1] < 1.0);
    assert!((ours[0] - theirs[0]).abs() < 1e-9 && (ours[1] - theirs[1]).abs() < 1e-9, "{ours:?} vs {theirs:?}");
}

#[test]
fn eigen_moduli_match_nalgebra() {
    for (seed, n) in [2usize, 3, 7, 20, 50].into_iter().enumerate() {
        let m = random(n, n, 100 + seed as u64);
        let ours = eigen_moduli(&m, n).unwrap();
        let mut theirs: Vec<f64> = to_na(&m).complex_eigenvalues().iter().map(|z| z.norm()).collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-6 * ours[0].max(1.0), "n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn perron_property_on_softmax_maps() {
    for case in 0..200u64 {
        let mut rng = SeededRng::stream(99, "perron", case);
        let n = 4 + rng.below(17);
        let scores = rng.normal_matrix(n, n, 0.0, 2.0);
        let map = scores.softmax_rows().unwrap();
        let m = eigen_moduli(&map, 2).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-9, "case {case}: {m:?}");
        assert!(m[1] < 1.0 - 1e-8, "case {case}: {m:?}");
    }
}

#[test]
fn rank_invariant_under_positive_scaling() {
    let cfg = RankConfig::default();
    for case in 0..50u64 {
        let mut rng = SeededRng::stream(5, "rank-scale", case);
        let rows = 3 + rng.below(20);
        let cols = 3 + rng.below(20);
        let inner = 1 + rng.below(rows.min(cols));
        // low-rank product plus a small perturbation straddling nothing in particular
        let a = rng.normal_matrix(rows, inner, 0.0, 1.0).matmul(&rng.normal_matrix(inner, cols, 0.0, 1.0)).unwrap();
        let alpha = 10f64.powf(rng.uniform() * 12.0 - 6.0);
        assert_eq!(
            numerical_rank(&a, &cfg).unwrap(),
            numerical_rank(&a.scale(alpha), &cfg).unwrap(),
            "case {case}, alpha {alpha}"
        );
    }
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0f64..10.0, r * c).prop_map(move |data| Matrix::from_vec(r, c, data).unwrap())
    })
}

proptest! {
    #[test]
    fn singular_values_sum_of_squares_is_frobenius(m in matrix_strategy()) {
        let sv = singular_values(&m).unwrap();
        let fro2 = m.frobenius_norm().powi(2);
        let sum2: f64 = sv.iter().map(|s| s * s).sum();
        prop_assert!((sum2 - fro2).abs() <= 1e-8 * fro2.max(1e-300));
        prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(sv.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn singular_values_transpose_invariant(m in matrix_strategy()) {
        let a = singular_values(&m).unwrap();
        let b = singular_values(&m.transpose()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-8 * a[0].max(1.0));
        }
    }

    #[test]
    fn softmax_rows_positive_and_stochastic(m in matrix_strategy(), shift in -500.0f64..500.0) {
        let s = m.softmax_rows().unwrap();
        for row in s.row_iter() {
            prop_assert!(row.iter().all(|&v| v > 0.0 || m.cols() > 1));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = m.shift(shift).softmax_rows().unwrap();
        prop_assert!(shifted.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn row_normalize_idempotent(m in matrix_strategy()) {
        let once = m.row_l2_normalize();
        let twice = once.row_l2_normalize();
        prop_assert!(once.max_abs_diff(&twice) < 1e-12);
        for row in once.row_iter() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
        }
    }
}
