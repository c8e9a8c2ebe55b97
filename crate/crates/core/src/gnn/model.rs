use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Graph, PropagationMode, PropagationOperator};
use crate::autodiff::{AdamConfig, SparseFactor, Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    None,
    LayerNorm,
    PairNorm,
}

/// The four compared configurations: plain row-normalized GCN, the same
/// with LayerNorm or PairNorm after each hidden layer, and the centered
/// operator without extra normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnMode {
    Vanilla,
    LayerNorm,
    PairNorm,
    Centered,
}

impl GnnMode {
    pub const ALL: [GnnMode; 4] = [Self::Vanilla, Self::LayerNorm, Self::PairNorm, Self::Centered];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vanilla => "vanilla",
            Self::LayerNorm => "layernorm",
            Self::PairNorm => "pairnorm",
            Self::Centered => "centered",
        }
    }

    pub fn norm(self) -> NormKind {
        match self {
            Self::LayerNorm => NormKind::LayerNorm,
            Self::PairNorm => NormKind::PairNorm,
            Self::Vanilla | Self::Centered => NormKind::None,
        }
    }

    pub fn propagation(self) -> PropagationMode {
        match self {
            Self::Centered => PropagationMode::CenteredRowNorm,
            _ => PropagationMode::RowNorm,
        }
    }
}

impl fmt::Display for GnnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GnnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown mode `{s}` (vanilla, layernorm, pairnorm, centered)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub depth: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub norm: NormKind,
    pub propagation: PropagationMode,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub pairnorm_scale: f64,
    pub layernorm_eps: f64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            hidden: 32,
            dropout: 0.6,
            norm: NormKind::None,
            propagation: PropagationMode::RowNorm,
            adam: AdamConfig {
                lr: 0.005,
                ..AdamConfig::default()
            },
            epochs: 1000,
            patience: 100,
            seed: 0,
            pairnorm_scale: 1.0,
            layernorm_eps: 1e-5,
        }
    }
}

impl GnnConfig {
    pub fn for_mode(mode: GnnMode, depth: usize, seed: u64) -> Self {
        Self {
            depth,
            seed,
            norm: mode.norm(),
            propagation: mode.propagation(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.hidden == 0 {
            return Err(Error::invalid("gnn depth and hidden width must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.epochs == 0 || self.patience == 0 {
            return Err(Error::invalid("epochs and patience must be at least 1"));
        }
        Ok(())
    }
}

pub struct Forward {
    pub logits: Var,
    /// Input to the last layer; the logits themselves at depth 1.
    pub embedding: Var,
}

/// A GCN over fixed features and propagation operator. Layer `l` computes
/// `P·H·W_l + b_l`; hidden layers follow it with the configured norm, ReLU
/// and dropout, the last layer stays linear.
#[derive(Debug, Clone)]
pub struct GcnModel {
    features: Arc<SparseFactor>,
    prop: Arc<SparseFactor>,
    dims: Vec<usize>,
    cfg: GnnConfig,
}

impl GcnModel {
    pub fn new(graph: &Graph, op: &PropagationOperator, cfg: &GnnConfig) -> Result<Self> {
        cfg.validate()?;
        if op.n() != graph.n_nodes() {
            return Err(Error::ShapeMismatch {
                op: "gcn propagation",
                left: (op.n(), op.n()),
                right: graph.features.shape(),
            });
        }
        let mut dims = vec![graph.n_features()];
        dims.extend(std::iter::repeat(cfg.hidden).take(cfg.depth - 1));
        dims.push(graph.n_classes());
        Ok(Self {
            features: Arc::new(SparseFactor::new(CsrMatrix::from_dense(&graph.features), false)?),
            prop: Arc::clone(op.factor()),
            dims,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.cfg
    }

    /// `[W_0, b_0, W_1, b_1, …]`; Glorot-uniform weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<Matrix> {
        let mut params = Vec::with_capacity(2 * self.cfg.depth);
        for (l, pair) in self.dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = SeededRng::stream(seed, "gcn-weights", l as u64);
            params.push(rng.uniform_matrix(fan_in, fan_out).map(|u| (2.0 * u - 1.0) * a));
            params.push(Matrix::zeros(1, fan_out));
        }
        params
    }

    /// `dropout_rng = None` runs in evaluation mode.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], mut dropout_rng: Option<&mut SeededRng>) -> Result<Forward> {
        if params.len() != 2 * self.cfg.depth {
            return Err(Error::invalid(format!("{} params for depth {}", params.len(), self.cfg.depth)));
        }
        let mut h: Option<Var> = None;
        let mut embedding = None;
        for l in 0..self.cfg.depth {
            let (w, b) = (params[2 * l], params[2 * l + 1]);
            let hw = match h {
                None => tape.sparse_matmul(&self.features, w)?,
                Some(h) => tape.matmul(h, w)?,
            };
            let ph = tape.sparse_matmul(&self.prop, hw)?;
            let z = tape.add_row_bias(ph, b)?;
            if l + 1 == self.cfg.depth {
                return Ok(Forward {
                    logits: z,
                    embedding: embedding.unwrap_or(z),
                });
            }
            let z = match self.cfg.norm {
                NormKind::None => z,
                NormKind::LayerNorm => tape.layernorm(z, self.cfg.layernorm_eps)?,
                NormKind::PairNorm => tape.pairnorm(z, self.cfg.pairnorm_scale)?,
            };
            let z = tape.relu(z)?;
            let z = match dropout_rng.as_deref_mut() {
                Some(rng) => tape.dropout(z, self.cfg.dropout, rng, true)?,
                None => z,
            };
            embedding = Some(z);
            h = Some(z);
        }
        unreachable!("depth >= 1 is validated")
    }
}

/// Share of `idx` whose row argmax (first on ties) equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let hits = idx
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let arg = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
            arg == labels[i]
        })
        .count();
    hits as f64 / idx.len() as f64
}
