//! Convergence of repeated attention toward a rank-one matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{attention_map, AttentionWeights, InitKind, InitScheme};
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, Matrix, RankConfig};
use crate::rng::{derive_seed, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSpec {
    pub n: usize,
    pub d: usize,
    pub k_max: usize,
    pub seed: u64,
    /// Also run the stack that re-evaluates the map at every step.
    pub evolving: bool,
    pub rank_cfg: RankConfig,
}

impl FixedSpec {
    pub fn new(n: usize, d: usize, k_max: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            k_max,
            seed,
            evolving: true,
            rank_cfg: RankConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d == 0 || self.k_max == 0 {
            return Err(Error::invalid(format!(
                "converge needs n >= 2, d >= 1 and depth >= 1 (got n={}, d={}, depth={})",
                self.n, self.d, self.k_max
            )));
        }
        self.rank_cfg.validate()
    }

    /// `W_Q`, `W_K` standard normal, `W_V = I`; one draw for every step.
    pub fn weights(&self) -> AttentionWeights {
        let init = InitScheme::new(InitKind::StdNormal, self.seed);
        let mut rng = SeededRng::stream(self.seed, "converge-fixed", 0);
        AttentionWeights::sample(&init, self.d, &mut rng, true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub k: usize,
    pub rank: usize,
    /// `‖Y_k − Y_{k−1}‖_F`.
    pub residual: f64,
    pub evolving_rank: Option<usize>,
}

/// `Y_k = S·Y_{k−1}` with `S = S(X₀; W)` computed once at `X₀ = I` (`n x d`).
pub fn converge_fixed(spec: &FixedSpec) -> Result<Vec<FixedPoint>> {
    spec.validate()?;
    let x0 = Matrix::eye(spec.n, spec.d);
    let w = spec.weights();
    let map = attention_map(&x0, &w)?;
    let mut points = converge_with_map(&map, &x0, spec.k_max, &spec.rank_cfg)?;
    if spec.evolving {
        let mut y = x0;
        for point in &mut points {
            y = attention_map(&y, &w)?.matmul(&y)?;
            y.ensure_finite("converge_fixed")?;
            point.evolving_rank = Some(numerical_rank(&y, &spec.rank_cfg)?);
        }
    }
    Ok(points)
}

/// Powers of an arbitrary fixed `map` applied to `x`, for `k = 1..=k_max`.
pub fn converge_with_map(map: &Matrix, x: &Matrix, k_max: usize, rank_cfg: &RankConfig) -> Result<Vec<FixedPoint>> {
    if !map.is_square() {
        return Err(Error::NotSquare {
            op: "converge_with_map",
            rows: map.rows(),
            cols: map.cols(),
        });
    }
    let mut points = Vec::with_capacity(k_max);
    let mut prev = x.clone();
    for k in 1..=k_max {
        let next = map.matmul(&prev)?;
        next.ensure_finite("converge_with_map")?;
        let residual = next.sub(&prev)?.frobenius_norm();
        points.push(FixedPoint {
            k,
            rank: numerical_rank(&next, rank_cfg)?,
            residual,
            evolving_rank: None,
        });
        prev = next;
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n: usize,
    pub d: usize,
    pub depth: usize,
    pub trials: usize,
    pub seed: u64,
    pub rank_cfg: RankConfig,
}

impl RandomSpec {
    pub fn new(n: usize, d: usize, depth: usize, trials: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            depth,
            trials,
            seed,
            rank_cfg: RankConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d == 0 || self.depth == 0 || self.trials == 0 {
            return Err(Error::invalid(format!(
                "converge needs n >= 2, d >= 1, depth >= 1 and trials >= 1 (got n={}, d={}, depth={}, trials={})",
                self.n, self.d, self.depth, self.trials
            )));
        }
        self.rank_cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomReport {
    pub trial_ranks: Vec<usize>,
    pub mean_rank: usize,
    pub mean: Matrix,
}

/// One bare attention stack: `Y_{l+1} = S(Y_l; W^l)·Y_l` from `Y_0 = I`,
/// fresh standard-normal `W_Q`, `W_K` per layer and `W_V = I`.
pub fn random_stack(spec: &RandomSpec, trial: usize) -> Result<Matrix> {
    let init = InitScheme::new(InitKind::StdNormal, spec.seed);
    let trial_seed = derive_seed(spec.seed, "converge-random", trial as u64);
    let mut y = Matrix::eye(spec.n, spec.d);
    for layer in 0..spec.depth {
        let mut rng = SeededRng::stream(trial_seed, "layer", layer as u64);
        let w = AttentionWeights::sample(&init, spec.d, &mut rng, true);
        y = attention_map(&y, &w)?.matmul(&y)?;
        if !y.is_finite() {
            return Err(Error::NonFiniteLayer { layer: layer + 1 });
        }
    }
    Ok(y)
}

/// Runs `trials` independent stacks and measures the rank of their
/// entrywise mean. Trials run in parallel; the mean is summed in trial order.
pub fn converge_random(spec: &RandomSpec) -> Result<RandomReport> {
    spec.validate()?;
    let finals: Vec<Matrix> = (0..spec.trials)
        .into_par_iter()
        .map(|t| random_stack(spec, t))
        .collect::<Result<_>>()?;
    let mut mean = Matrix::zeros(spec.n, spec.d);
    let mut trial_ranks = Vec::with_capacity(finals.len());
    for m in &finals {
        mean.add_scaled_assign(1.0, m)?;
        trial_ranks.push(numerical_rank(m, &spec.rank_cfg)?);
    }
    let mean = mean.scale(1.0 / spec.trials as f64);
    let mean_rank = numerical_rank(&mean, &spec.rank_cfg)?;
    Ok(RandomReport {
        trial_ranks,
        mean_rank,
        mean,
    })
}
