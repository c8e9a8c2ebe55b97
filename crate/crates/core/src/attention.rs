//! Single-head self-attention, its centered variant, and the three
//! residual/normalization block wirings used for deep-stack simulations.
//!
//! The centered map is `softmax(X W_Q (X W_K)ᵀ / √d) + γ·𝟙𝟙ᵀ/n`: the offset
//! is added after the softmax, so each row sums to `1 + γ`. Adding the same
//! constant inside the softmax is a no-op (softmax is shift invariant per
//! row); that placement is kept only as [`OffsetPlacement::InsideSoftmax`]
//! for comparison runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// Query, key and value projections of one layer, all `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    w_q: Matrix,
    w_k: Matrix,
    w_v: Matrix,
}

impl AttentionWeights {
    pub fn new(w_q: Matrix, w_k: Matrix, w_v: Matrix) -> Result<Self> {
        let d = w_q.rows();
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v)] {
            if w.shape() != (d, d) || d == 0 {
                return Err(Error::invalid(format!(
                    "{name} is {}x{}, expected a square {d}x{d} matrix with d >= 1",
                    w.rows(),
                    w.cols()
                )));
            }
        }
        Ok(Self { w_q, w_k, w_v })
    }

    pub fn identity(d: usize) -> Self {
        let i = Matrix::identity(d);
        Self {
            w_q: i.clone(),
            w_k: i.clone(),
            w_v: i,
        }
    }

    /// Draws `W_Q`, `W_K`, `W_V` in that order from `rng` according to `init`.
    /// With `value_identity` set, `W_V = I` and only two matrices are drawn.
    pub fn sample(init: &InitScheme, d: usize, rng: &mut SeededRng, value_identity: bool) -> Self {
        let draw = |rng: &mut SeededRng| match init.kind {
            InitKind::Identity => Matrix::identity(d),
            InitKind::Uniform01 => rng.uniform_matrix(d, d),
            InitKind::StdNormal => rng.normal_matrix(d, d, init.mean, init.std),
        };
        let w_q = draw(rng);
        let w_k = draw(rng);
        let w_v = if value_identity { Matrix::identity(d) } else { draw(rng) };
        Self { w_q, w_k, w_v }
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn w_q(&self) -> &Matrix {
        &self.w_q
    }

    pub fn w_k(&self) -> &Matrix {
        &self.w_k
    }

    pub fn w_v(&self) -> &Matrix {
        &self.w_v
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "attention",
                left: x.shape(),
                right: self.w_q.shape(),
            });
        }
        if x.rows() == 0 {
            return Err(Error::invalid("attention over zero tokens"));
        }
        Ok(())
    }
}

/// `x · w`, skipping the product when `w` is exactly the identity.
fn project(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    if is_identity(w) && x.cols() == w.rows() {
        Ok(x.clone())
    } else {
        x.matmul(w)
    }
}

fn is_identity(w: &Matrix) -> bool {
    w.is_square()
        && w.row_iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Identity,
    #[serde(rename = "uniform")]
    Uniform01,
    #[serde(rename = "normal")]
    StdNormal,
}

impl InitKind {
    pub const ALL: [InitKind; 3] = [InitKind::Identity, InitKind::Uniform01, InitKind::StdNormal];

    pub fn name(self) -> &'static str {
        match self {
            InitKind::Identity => "identity",
            InitKind::Uniform01 => "uniform",
            InitKind::StdNormal => "normal",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(InitKind::Identity),
            "uniform" | "uniform01" => Ok(InitKind::Uniform01),
            "normal" | "stdnormal" | "gaussian" => Ok(InitKind::StdNormal),
            other => Err(Error::invalid(format!("unknown init scheme `{other}`"))),
        }
    }
}

/// Weight initialization: identity, `U([0,1])` or `N(mean, std²)` entrywise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitScheme {
    pub kind: InitKind,
    pub seed: u64,
    /// Only used by [`InitKind::StdNormal`].
    pub mean: f64,
    pub std: f64,
}

impl InitScheme {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            mean: 0.0,
            std: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockVariant {
    PreLn,
    PostLn,
    ResiDual,
}

impl BlockVariant {
    pub const ALL: [BlockVariant; 3] = [BlockVariant::PreLn, BlockVariant::PostLn, BlockVariant::ResiDual];

    pub fn name(self) -> &'static str {
        match self {
            BlockVariant::PreLn => "preln",
            BlockVariant::PostLn => "postln",
            BlockVariant::ResiDual => "residual",
        }
    }
}

impl fmt::Display for BlockVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlockVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "preln" => Ok(BlockVariant::PreLn),
            "postln" => Ok(BlockVariant::PostLn),
            "residual" => Ok(BlockVariant::ResiDual),
            other => Err(Error::invalid(format!("unknown block variant `{other}`"))),
        }
    }
}

/// Where the `γ·𝟙𝟙ᵀ/n` term is added.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPlacement {
    #[default]
    AfterSoftmax,
    InsideSoftmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub n_tokens: usize,
    pub dim: usize,
    pub depth: usize,
    pub gamma: f64,
    pub variant: BlockVariant,
    pub init: InitScheme,
    /// Reuse one set of weights for every layer instead of drawing per layer.
    pub share_weights: bool,
    /// Force `W_V = I`.
    pub value_identity: bool,
    #[serde(default)]
    pub placement: OffsetPlacement,
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::invalid("stack depth must be at least 1"));
        }
        if self.n_tokens < 2 {
            return Err(Error::invalid("a stack needs at least 2 tokens"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("token dimension must be at least 1"));
        }
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma must be finite"));
        }
        Ok(())
    }

    /// Weights for `layer` (0-based). Shared stacks always return layer 0's.
    pub fn layer_weights(&self, layer: usize) -> AttentionWeights {
        if self.init.kind == InitKind::Identity {
            return AttentionWeights::identity(self.dim);
        }
        let index = if self.share_weights { 0 } else { layer as u64 };
        let mut rng = SeededRng::stream(self.init.seed, "attention-weights", index);
        AttentionWeights::sample(&self.init, self.dim, &mut rng, self.value_identity)
    }
}

/// The row-stochastic map `softmax(X W_Q (X W_K)ᵀ / √d)`.
pub fn attention_map(x: &Matrix, w: &AttentionWeights) -> Result<Matrix> {
    w.check_input(x)?;
    let q = project(x, &w.w_q)?;
    let k = project(x, &w.w_k)?;
    let scale = 1.0 / (w.dim() as f64).sqrt();
    let mut scores = q.matmul_transpose(&k)?;
    scores.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    scores.softmax_rows()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenteredAttention {
    /// `n x n`, rows sum to `1 + γ`.
    pub map: Matrix,
    /// `map · X W_V`.
    pub out: Matrix,
}

pub fn centered_attention(x: &Matrix, w: &AttentionWeights, gamma: f64) -> Result<CenteredAttention> {
    centered_attention_with(x, w, gamma, OffsetPlacement::AfterSoftmax)
}

pub fn centered_attention_with(
    x: &Matrix,
    w: &AttentionWeights,
    gamma: f64,
    placement: OffsetPlacement,
) -> Result<CenteredAttention> {
    let mut map = attention_map(x, w)?;
    let n = map.rows();
    let offset = gamma / n as f64;
    match placement {
        // γ = 0 must leave the map bit-identical
        OffsetPlacement::AfterSoftmax if gamma != 0.0 => {
            map.as_mut_slice().iter_mut().for_each(|v| *v += offset);
        }
        // a per-row constant inside the softmax cancels; the map is unchanged
        _ => {}
    }
    let v = project(x, &w.w_v)?;
    let out = map.matmul(&v)?;
    Ok(CenteredAttention { map, out })
}

/// Token state carried between blocks. `residual` is only advanced by
/// [`BlockVariant::ResiDual`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub x: Matrix,
    pub residual: Matrix,
}

impl BlockState {
    pub fn new(x0: Matrix) -> Self {
        Self {
            residual: x0.clone(),
            x: x0,
        }
    }
}

/// One block:
///
/// * Pre-LN: `X' = S_γ(N(X)) + X`
/// * Post-LN: `X' = N(S_γ(X) + X)`
/// * ResiDual: `X' = N(S_γ(X) + X)`, `R' = R + S_γ(X)`
///
/// where `N` divides each row by its L2 norm.
pub fn apply_block(state: &BlockState, w: &AttentionWeights, variant: BlockVariant, gamma: f64) -> Result<BlockState> {
    apply_block_with(state, w, variant, gamma, OffsetPlacement::AfterSoftmax)
}

pub fn apply_block_with(
    state: &BlockState,
    w: &AttentionWeights,
    variant: BlockVariant,
    gamma: f64,
    placement: OffsetPlacement,
) -> Result<BlockState> {
    if state.x.shape() != state.residual.shape() {
        return Err(Error::ShapeMismatch {
            op: "apply_block",
            left: state.x.shape(),
            right: state.residual.shape(),
        });
    }
    match variant {
        BlockVariant::PreLn => {
            let s = centered_attention_with(&state.x.row_l2_normalize(), w, gamma, placement)?.out;
            Ok(BlockState {
                x: s.add(&state.x)?,
                residual: state.residual.clone(),
            })
        }
        BlockVariant::PostLn => {
            let s = centered_attention_with(&state.x, w, gamma, placement)?.out;
            Ok(BlockState {
                x: s.add(&state.x)?.row_l2_normalize(),
                residual: state.residual.clone(),
            })
        }
        BlockVariant::ResiDual => {
            let s = centered_attention_with(&state.x, w, gamma, placement)?.out;
            Ok(BlockState {
                x: s.add(&state.x)?.row_l2_normalize(),
                residual: state.residual.add(&s)?,
            })
        }
    }
}

/// Network output for a state: Pre-LN `N(X)`, Post-LN `X`, ResiDual `N(R) + X`.
pub fn readout(state: &BlockState, variant: BlockVariant) -> Matrix {
    match variant {
        BlockVariant::PreLn => state.x.row_l2_normalize(),
        BlockVariant::PostLn => state.x.clone(),
        BlockVariant::ResiDual => state
            .residual
            .row_l2_normalize()
            .add(&state.x)
            .expect("state shapes checked by apply_block"),
    }
}

/// Runs `cfg.depth` blocks from `x0`, calling `visit(layer, readout)` at
/// layer 0, every `record_every` layers, and at the final layer.
pub fn run_stack_with(
    x0: &Matrix,
    cfg: &StackConfig,
    record_every: usize,
    mut visit: impl FnMut(usize, Matrix) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    if record_every == 0 {
        return Err(Error::invalid("record_every must be at least 1"));
    }
    if x0.shape() != (cfg.n_tokens, cfg.dim) {
        return Err(Error::ShapeMismatch {
            op: "run_stack",
            left: x0.shape(),
            right: (cfg.n_tokens, cfg.dim),
        });
    }
    let shared = (cfg.share_weights || cfg.init.kind == InitKind::Identity).then(|| cfg.layer_weights(0));
    let mut state = BlockState::new(x0.clone());
    visit(0, readout(&state, cfg.variant))?;
    for layer in 1..=cfg.depth {
        let owned;
        let w = match &shared {
            Some(w) => w,
            None => {
                owned = cfg.layer_weights(layer - 1);
                &owned
            }
        };
        state = apply_block_with(&state, w, cfg.variant, cfg.gamma, cfg.placement)
            .map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLayer { layer },
                other => other,
            })?;
        if !state.x.is_finite() || !state.residual.is_finite() {
            return Err(Error::NonFiniteLayer { layer });
        }
        if layer % record_every == 0 || layer == cfg.depth {
            visit(layer, readout(&state, cfg.variant))?;
        }
    }
    Ok(())
}

/// Collecting form of [`run_stack_with`].
pub fn run_stack(x0: &Matrix, cfg: &StackConfig, record_every: usize) -> Result<Vec<(usize, Matrix)>> {
    let mut trajectory = Vec::new();
    run_stack_with(x0, cfg, record_every, |layer, m| {
        trajectory.push((layer, m));
        Ok(())
    })?;
    Ok(trajectory)
}
