//! Seeded, portable random streams.
//!
//! Every stream is a PCG-XSL-RR 128/64 generator (`rand_pcg::Pcg64`). The
//! 128-bit state and stream selector are derived from a base seed and a
//! string label with SplitMix64, so the same `(seed, label, index)` triple
//! yields the same sequence on every platform and in every language that
//! implements the same three algorithms.
//!
//! Uniform doubles take the top 53 bits of a 64-bit draw. Gaussian draws use
//! the Box–Muller transform and cache the second variate of each pair.

use rand_core::Rng as _;
use rand_pcg::Pcg64;

use crate::linalg::Matrix;

/// SplitMix64 finalizer step.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed for a named sub-stream.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut s = base ^ fnv1a(label).rotate_left(17) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut s);
    splitmix64(&mut s)
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Pcg64,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let state = (u128::from(splitmix64(&mut s)) << 64) | u128::from(splitmix64(&mut s));
        let stream = (u128::from(splitmix64(&mut s)) << 64) | u128::from(splitmix64(&mut s));
        Self {
            inner: Pcg64::new(state, stream),
            spare_normal: None,
        }
    }

    /// Stream for `label` / `index` under `base`.
    pub fn stream(base: u64, label: &str, index: u64) -> Self {
        Self::new(derive_seed(base, label, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` (Lemire's multiply-shift, with rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Standard normal via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U keeps the log argument in (0, 1]
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| self.uniform()).collect();
        Matrix::from_vec(rows, cols, data).expect("finite by construction")
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, mean: f64, std: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| mean + std * self.normal()).collect();
        Matrix::from_vec(rows, cols, data).expect("finite by construction")
    }
}
