//! Rank of deep attention stacks as a function of the offset γ and depth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairwise_cosine;
use crate::attention::{run_stack_with, BlockVariant, InitKind, InitScheme, OffsetPlacement, StackConfig};
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, Matrix, RankConfig};
use crate::rng::derive_seed;

/// `count` evenly spaced values from `min` to `max` inclusive, snapped to
/// 12 decimals so a 0.1 step prints as 0.1 and not 0.30000000000000004.
pub fn gamma_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) || max < min {
        return Err(Error::invalid(format!("bad gamma range [{min}, {max}]")));
    }
    if min == max {
        return Ok(vec![min]);
    }
    if step <= 0.0 {
        return Err(Error::invalid("gamma step must be positive"));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub gammas: Vec<f64>,
    pub max_depth: usize,
    pub record_every: usize,
    pub variants: Vec<BlockVariant>,
    pub inits: Vec<InitKind>,
    pub n_tokens: usize,
    pub dim: usize,
    pub rank_cfg: RankConfig,
    pub base_seed: u64,
    /// Per-layer weights unless set.
    pub share_weights: bool,
    pub value_identity: bool,
    pub normal_mean: f64,
    pub normal_std: f64,
    pub placement: OffsetPlacement,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            gammas: gamma_grid(-1.5, 1.5, 0.1).expect("static range"),
            max_depth: 2000,
            record_every: 10,
            variants: BlockVariant::ALL.to_vec(),
            inits: InitKind::ALL.to_vec(),
            n_tokens: 100,
            dim: 100,
            rank_cfg: RankConfig::default(),
            base_seed: 0,
            share_weights: false,
            value_identity: false,
            normal_mean: 0.0,
            normal_std: 1.0,
            placement: OffsetPlacement::AfterSoftmax,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(Error::invalid("sweep needs at least one gamma"));
        }
        if self.gammas.windows(2).any(|w| w[0] > w[1]) || self.gammas.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gammas must be finite and sorted ascending"));
        }
        if self.record_every == 0 || self.max_depth < self.record_every {
            return Err(Error::invalid(format!(
                "need 1 <= record_every ({}) <= max_depth ({})",
                self.record_every, self.max_depth
            )));
        }
        if self.variants.is_empty() || self.inits.is_empty() {
            return Err(Error::invalid("sweep needs at least one variant and one init"));
        }
        if self.n_tokens < 2 || self.dim == 0 {
            return Err(Error::invalid("sweep needs n_tokens >= 2 and dim >= 1"));
        }
        self.rank_cfg.validate()
    }

    /// Seed of the weight stream for `init`; shared across γ and variants so
    /// columns differ only in the offset and the wiring.
    pub fn init_scheme(&self, init: InitKind) -> InitScheme {
        InitScheme {
            kind: init,
            seed: derive_seed(self.base_seed, "sweep-weights", init as u64),
            mean: self.normal_mean,
            std: self.normal_std,
        }
    }

    pub fn stack_config(&self, variant: BlockVariant, init: InitKind, gamma: f64) -> StackConfig {
        StackConfig {
            n_tokens: self.n_tokens,
            dim: self.dim,
            depth: self.max_depth,
            gamma,
            variant,
            init: self.init_scheme(init),
            share_weights: self.share_weights,
            value_identity: self.value_identity,
            placement: self.placement,
        }
    }

    /// Recorded depths per column: 0, `record_every`, ..., and `max_depth`.
    pub fn recorded_depths(&self) -> usize {
        self.max_depth / self.record_every + 1 + usize::from(self.max_depth % self.record_every != 0)
    }

    /// `(variant, init, gamma)` triples in output order.
    pub fn columns(&self) -> Vec<(BlockVariant, InitKind, f64)> {
        let mut variants = self.variants.clone();
        variants.sort();
        variants.dedup();
        let mut inits = self.inits.clone();
        inits.sort();
        inits.dedup();
        let mut cols = Vec::new();
        for &v in &variants {
            for &i in &inits {
                for &g in &self.gammas {
                    cols.push((v, i, g));
                }
            }
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub variant: BlockVariant,
    pub init: InitKind,
    pub gamma: f64,
    pub depth: usize,
    pub rank: usize,
    pub mean_pairwise_cosine: f64,
}

/// One trajectory of depth `max_depth` per `(variant, init, γ)`, with rank
/// and cosine measured at every recorded depth. The input is `I` (`n x d`).
/// Columns run in parallel on the current rayon pool; output order is fixed
/// by [`SweepSpec::columns`].
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    spec.validate()?;
    let columns = spec.columns();
    let per_column: Vec<Result<Vec<SweepCell>>> = columns
        .par_iter()
        .map(|&(variant, init, gamma)| {
            run_column(spec, variant, init, gamma).map_err(|e| Error::Cell {
                variant: variant.to_string(),
                init: init.to_string(),
                gamma,
                source: Box::new(e),
            })
        })
        .collect();
    let mut cells = Vec::with_capacity(columns.len() * spec.recorded_depths());
    for column in per_column {
        cells.extend(column?);
    }
    Ok(cells)
}

/// Cells of a single column.
pub fn run_column(spec: &SweepSpec, variant: BlockVariant, init: InitKind, gamma: f64) -> Result<Vec<SweepCell>> {
    let cfg = spec.stack_config(variant, init, gamma);
    let x0 = Matrix::eye(spec.n_tokens, spec.dim);
    let mut cells = Vec::with_capacity(spec.recorded_depths());
    run_stack_with(&x0, &cfg, spec.record_every, |depth, out| {
        cells.push(SweepCell {
            variant,
            init,
            gamma,
            depth,
            rank: numerical_rank(&out, &spec.rank_cfg)?,
            mean_pairwise_cosine: pairwise_cosine(&out)?,
        });
        Ok(())
    })?;
    Ok(cells)
}
