//! Eigenvalues of a general real square matrix: diagonal balancing,
//! orthogonal reduction to upper Hessenberg form, then Francis double-shift
//! QR. Eigenvalues may be complex; only their moduli leave this module.

use super::Matrix;
use crate::error::{Error, Result};

const MAX_ITERS_PER_EIGENVALUE: usize = 60;

/// The `k` largest eigenvalue moduli of `a`, descending.
pub fn eigen_moduli(a: &Matrix, k: usize) -> Result<Vec<f64>> {
    let mut moduli: Vec<f64> = eigenvalues(a)?.into_iter().map(|(re, im)| re.hypot(im)).collect();
    if k > moduli.len() {
        return Err(Error::invalid(format!(
            "requested {k} eigenvalues of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    moduli.sort_by(|x, y| y.total_cmp(x));
    moduli.truncate(k);
    Ok(moduli)
}

/// All eigenvalues as `(re, im)` pairs, in no particular order.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<(f64, f64)>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "eigenvalues",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    a.ensure_finite("eigenvalues")?;
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = OneBased::new(a);
    balance(&mut h);
    to_hessenberg(&mut h);
    hessenberg_qr(&mut h)
}

/// 1-based square view; keeps the index arithmetic of the classic
/// formulations readable.
struct OneBased {
    n: usize,
    data: Vec<f64>,
}

impl OneBased {
    fn new(a: &Matrix) -> Self {
        Self {
            n: a.rows(),
            data: a.as_slice().to_vec(),
        }
    }
}

impl std::ops::Index<(usize, usize)> for OneBased {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[(i - 1) * self.n + (j - 1)]
    }
}

impl std::ops::IndexMut<(usize, usize)> for OneBased {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[(i - 1) * self.n + (j - 1)]
    }
}

#[inline]
fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Similarity scaling by powers of two so row and column norms are comparable.
fn balance(a: &mut OneBased) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.n;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let ginv = 1.0 / f;
                    for j in 1..=n {
                        a[(i, j)] *= ginv;
                    }
                    for j in 1..=n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form; entries below the
/// subdiagonal are zeroed on exit.
fn to_hessenberg(a: &mut OneBased) {
    let n = a.n;
    let mut ort = vec![0.0; n + 1];
    for m in 2..n {
        let mut scale = 0.0;
        for i in m..=n {
            scale += a[(i, m - 1)].abs();
        }
        if scale == 0.0 {
            continue;
        }
        let mut h = 0.0;
        for i in (m..=n).rev() {
            ort[i] = a[(i, m - 1)] / scale;
            h += ort[i] * ort[i];
        }
        let g = -sign(h.sqrt(), ort[m]);
        h -= ort[m] * g;
        ort[m] -= g;
        for j in m..=n {
            let mut f = 0.0;
            for i in (m..=n).rev() {
                f += ort[i] * a[(i, j)];
            }
            f /= h;
            for i in m..=n {
                a[(i, j)] -= f * ort[i];
            }
        }
        for i in 1..=n {
            let mut f = 0.0;
            for j in (m..=n).rev() {
                f += ort[j] * a[(i, j)];
            }
            f /= h;
            for j in m..=n {
                a[(i, j)] -= f * ort[j];
            }
        }
        a[(m, m - 1)] = scale * g;
    }
    for i in 3..=n {
        for j in 1..=i - 2 {
            a[(i, j)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
fn hessenberg_qr(a: &mut OneBased) -> Result<Vec<(f64, f64)>> {
    let n = a.n;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0;
        loop {
            // look for a single small subdiagonal element
            let mut l = nn;
            while l >= 2 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() <= f64::EPSILON * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nn, nn)];
            if l == nn {
                // one root found
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[(nn - 1, nn - 1)];
            let mut w = a[(nn, nn - 1)] * a[(nn - 1, nn)];
            if l == nn - 1 {
                // two roots from the trailing 2x2 block
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn = nn.saturating_sub(2);
                break;
            }
            if its == MAX_ITERS_PER_EIGENVALUE {
                return Err(Error::NoConvergence {
                    routine: "eigenvalues",
                    iterations: its,
                });
            }
            if its == 10 || its == 20 || its == 40 {
                // exceptional shift
                t += x;
                for i in 1..=nn {
                    a[(i, i)] -= x;
                }
                let s = a[(nn, nn - 1)].abs() + a[(nn - 1, nn - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            // form the shift and look for two consecutive small subdiagonals
            let mut m = nn - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[(m, m)];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - r - s;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            // double QR step on rows l..nn, columns m..nn
            for k in m..nn {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = 0.0;
                    if k != nn - 1 {
                        r = a[(k + 2, k - 1)];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a[(k, j)] + q * a[(k + 1, j)];
                        if k != nn - 1 {
                            p += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= p * z;
                        }
                        a[(k + 1, j)] -= p * y;
                        a[(k, j)] -= p * x;
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        p = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k != nn - 1 {
                            p += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= p * r;
                        }
                        a[(i, k + 1)] -= p * q;
                        a[(i, k)] -= p;
                    }
                }
            }
        }
    }
    Ok(wr[1..].iter().copied().zip(wi[1..].iter().copied()).collect())
}
