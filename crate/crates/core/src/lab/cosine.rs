use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Mean cosine similarity over unordered pairs of rows. Zero rows are left
/// out of every pair; fewer than two nonzero rows is an error.
///
/// Uses `Σ_{i<j} ⟨uᵢ,uⱼ⟩ = (‖Σ uᵢ‖² − m) / 2` over the `m` unit rows, which is
/// `O(n·d)` instead of `O(n²·d)`.
pub fn pairwise_cosine(x: &Matrix) -> Result<f64> {
    let unit = x.row_l2_normalize();
    let mut total = vec![0.0; x.cols()];
    let mut m = 0usize;
    for row in unit.row_iter() {
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        m += 1;
        for (t, &v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }
    if m < 2 {
        return Err(Error::DegenerateRows(m));
    }
    let sum_sq: f64 = total.iter().map(|v| v * v).sum();
    let m = m as f64;
    let mean = (sum_sq - m) / (m * (m - 1.0));
    Ok(mean.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn brute_force(x: &Matrix) -> f64 {
        let rows: Vec<&[f64]> = x.row_iter().filter(|r| r.iter().any(|&v| v != 0.0)).collect();
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut acc = 0.0;
        let mut pairs = 0.0;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let dot: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| a * b).sum();
                acc += dot / (norm(rows[i]) * norm(rows[j]));
                pairs += 1.0;
            }
        }
        acc / pairs
    }

    #[test]
    fn examples() {
        let same = Matrix::from_rows(&[&[1.0, 2.0][..], &[1.0, 2.0], &[1.0, 2.0]]).unwrap();
        assert!((pairwise_cosine(&same).unwrap() - 1.0).abs() < 1e-15);
        assert!(pairwise_cosine(&Matrix::identity(2)).unwrap().abs() < 1e-15);
        let anti = Matrix::from_rows(&[&[1.0, 0.0][..], &[-1.0, 0.0]]).unwrap();
        assert!((pairwise_cosine(&anti).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rows_are_skipped() {
        let x = Matrix::from_rows(&[&[1.0, 0.0][..], &[0.0, 0.0], &[2.0, 0.0]]).unwrap();
        assert!((pairwise_cosine(&x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_zero_is_an_error() {
        assert!(matches!(pairwise_cosine(&Matrix::zeros(3, 2)), Err(Error::DegenerateRows(0))));
        let one = Matrix::from_rows(&[&[1.0, 0.0][..], &[0.0, 0.0]]).unwrap();
        assert!(matches!(pairwise_cosine(&one), Err(Error::DegenerateRows(1))));
    }

    #[test]
    fn matches_pairwise_loop() {
        for seed in 0..20 {
            let x = SeededRng::new(seed).normal_matrix(9, 4, 0.3, 1.0);
            assert!((pairwise_cosine(&x).unwrap() - brute_force(&x)).abs() < 1e-12);
        }
    }
}
