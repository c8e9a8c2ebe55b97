//! Singular values by Householder bidiagonalization followed by implicitly
//! shifted QR on the bidiagonal (Golub–Reinsch). Only the values are formed;
//! neither singular-vector basis is accumulated.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

const MAX_QR_SWEEPS: usize = 75;

/// Threshold configuration for [`numerical_rank`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub epsilon: f64,
    /// Take singular values of `A / ‖A‖_F` instead of `A`.
    pub normalize: bool,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            normalize: true,
        }
    }
}

impl RankConfig {
    pub fn new(epsilon: f64, normalize: bool) -> Result<Self> {
        let cfg = Self { epsilon, normalize };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("rank epsilon must be positive, got {}", self.epsilon)))
        }
    }
}

/// Singular values in descending order. A `m x n` input yields `min(m, n)` values.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    a.ensure_finite("singular_values")?;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::invalid("singular_values of an empty matrix"));
    }
    // the bidiagonalization below assumes rows >= cols
    let work = if a.rows() >= a.cols() { a.clone() } else { a.transpose() };
    let (m, n) = work.shape();
    let mut w = golub_reinsch(work.into_vec(), m, n)?;
    w.sort_by(|x, y| y.total_cmp(x));
    Ok(w)
}

/// Number of singular values of `A / ‖A‖_F` (or of `A` when normalization is
/// off) strictly above `cfg.epsilon`. The zero matrix has rank 0.
pub fn numerical_rank(a: &Matrix, cfg: &RankConfig) -> Result<usize> {
    cfg.validate()?;
    let fro = a.frobenius_norm();
    if fro == 0.0 {
        return Ok(0);
    }
    let scale = if cfg.normalize { fro } else { 1.0 };
    let sv = singular_values(a)?;
    Ok(sv.iter().filter(|&&s| s / scale > cfg.epsilon).count())
}

#[inline]
fn pythag(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

#[inline]
fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

fn golub_reinsch(mut a: Vec<f64>, m: usize, n: usize) -> Result<Vec<f64>> {
    let idx = |r: usize, c: usize| r * n + c;
    let mut w = vec![0.0; n];
    let mut rv1 = vec![0.0; n];
    let mut g = 0.0f64;
    let mut scale = 0.0f64;
    let mut anorm = 0.0f64;

    // Householder reduction to upper bidiagonal form: diagonal in w,
    // superdiagonal in rv1[1..].
    for i in 0..n {
        let l = i + 1;
        rv1[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        if i < m {
            for k in i..m {
                scale += a[idx(k, i)].abs();
            }
            if scale != 0.0 {
                let mut s = 0.0;
                for k in i..m {
                    a[idx(k, i)] /= scale;
                    s += a[idx(k, i)] * a[idx(k, i)];
                }
                let f = a[idx(i, i)];
                g = -sign(s.sqrt(), f);
                let h = f * g - s;
                a[idx(i, i)] = f - g;
                for j in l..n {
                    let mut s = 0.0;
                    for k in i..m {
                        s += a[idx(k, i)] * a[idx(k, j)];
                    }
                    let f = s / h;
                    for k in i..m {
                        let aki = a[idx(k, i)];
                        a[idx(k, j)] += f * aki;
                    }
                }
                for k in i..m {
                    a[idx(k, i)] *= scale;
                }
            }
        }
        w[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        if i < m && i + 1 != n {
            for k in l..n {
                scale += a[idx(i, k)].abs();
            }
            if scale != 0.0 {
                let mut s = 0.0;
                for k in l..n {
                    a[idx(i, k)] /= scale;
                    s += a[idx(i, k)] * a[idx(i, k)];
                }
                let f = a[idx(i, l)];
                g = -sign(s.sqrt(), f);
                let h = f * g - s;
                a[idx(i, l)] = f - g;
                for k in l..n {
                    rv1[k] = a[idx(i, k)] / h;
                }
                for j in l..m {
                    let mut s = 0.0;
                    for k in l..n {
                        s += a[idx(j, k)] * a[idx(i, k)];
                    }
                    for k in l..n {
                        a[idx(j, k)] += s * rv1[k];
                    }
                }
                for k in l..n {
                    a[idx(i, k)] *= scale;
                }
            }
        }
        anorm = anorm.max(w[i].abs() + rv1[i].abs());
    }

    let tol = f64::EPSILON * anorm;
    // Diagonalize the bidiagonal form, one trailing value at a time.
    for k in (0..n).rev() {
        let mut its = 0;
        loop {
            // find the split point l: rv1[l] negligible, or w[l-1] negligible
            let mut l = k;
            let mut cancel = true;
            loop {
                if l == 0 || rv1[l].abs() <= tol {
                    cancel = false;
                    break;
                }
                if w[l - 1].abs() <= tol {
                    break;
                }
                l -= 1;
            }
            if cancel {
                // w[l-1] is negligible: chase rv1[l] out with Givens rotations
                let mut c = 0.0;
                let mut s = 1.0;
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] *= c;
                    if f.abs() <= tol {
                        break;
                    }
                    let gg = w[i];
                    let h = pythag(f, gg);
                    w[i] = h;
                    let hinv = 1.0 / h;
                    c = gg * hinv;
                    s = -f * hinv;
                }
            }
            let z = w[k];
            if l == k {
                if z < 0.0 {
                    w[k] = -z;
                }
                break;
            }
            if its == MAX_QR_SWEEPS {
                return Err(Error::NoConvergence {
                    routine: "singular_values",
                    iterations: MAX_QR_SWEEPS,
                });
            }
            its += 1;

            // Wilkinson-style shift from the trailing 2x2 minor
            let mut x = w[l];
            let nm = k - 1;
            let mut y = w[nm];
            let mut g = rv1[nm];
            let mut h = rv1[k];
            let mut f = ((y - z) * (y + z) + (g - h) * (g + h)) / (2.0 * h * y);
            g = pythag(f, 1.0);
            f = ((x - z) * (x + z) + h * ((y / (f + sign(g, f))) - h)) / x;

            let mut c = 1.0;
            let mut s = 1.0;
            for j in l..=nm {
                let i = j + 1;
                g = rv1[i];
                y = w[i];
                h = s * g;
                g *= c;
                let mut zz = pythag(f, h);
                rv1[j] = zz;
                c = f / zz;
                s = h / zz;
                f = x * c + g * s;
                g = g * c - x * s;
                h = y * s;
                y *= c;
                zz = pythag(f, h);
                w[j] = zz;
                if zz != 0.0 {
                    let zinv = 1.0 / zz;
                    c = f * zinv;
                    s = h * zinv;
                }
                f = c * g + s * y;
                x = c * y - s * g;
            }
            rv1[l] = 0.0;
            rv1[k] = f;
            w[k] = x;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
    }

    #[test]
    fn identity_values() {
        assert!(close(&singular_values(&Matrix::identity(3)).unwrap(), &[1.0, 1.0, 1.0], 1e-14));
    }

    #[test]
    fn all_ones_is_rank_one() {
        let sv = singular_values(&Matrix::filled(4, 4, 1.0)).unwrap();
        assert!((sv[0] - 4.0).abs() < 1e-12);
        assert!(sv[1..].iter().all(|&s| s.abs() < 1e-12), "{sv:?}");
    }

    #[test]
    fn diagonal_values_sorted() {
        let sv = singular_values(&Matrix::diag(&[1.0, 3.0, 2.0])).unwrap();
        assert!(close(&sv, &[3.0, 2.0, 1.0], 1e-14));
    }

    #[test]
    fn wide_and_tall_agree() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.5]]).unwrap();
        let wide = singular_values(&a).unwrap();
        let tall = singular_values(&a.transpose()).unwrap();
        assert_eq!(wide.len(), 2);
        assert!(close(&wide, &tall, 1e-12));
    }

    #[test]
    fn rank_examples() {
        let cfg = RankConfig::default();
        assert_eq!(numerical_rank(&Matrix::identity(100), &cfg).unwrap(), 100);
        assert_eq!(numerical_rank(&Matrix::filled(100, 100, 1.0), &cfg).unwrap(), 1);
        assert_eq!(numerical_rank(&Matrix::diag(&[1.0, 1e-6]), &cfg).unwrap(), 1);
        assert_eq!(numerical_rank(&Matrix::zeros(5, 5), &cfg).unwrap(), 0);
    }

    #[test]
    fn unnormalized_rank_uses_raw_values() {
        let cfg = RankConfig::new(0.5, false).unwrap();
        assert_eq!(numerical_rank(&Matrix::diag(&[2.0, 0.6, 0.4]), &cfg).unwrap(), 2);
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert!(RankConfig::new(0.0, true).is_err());
        assert!(RankConfig::new(-1.0, true).is_err());
    }
}
