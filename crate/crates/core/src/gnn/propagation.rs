use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::autodiff::SparseFactor;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationMode {
    /// `D⁻¹(A + I)`.
    RowNorm,
    /// `D^{-1/2}(A + I)D^{-1/2}`.
    SymNorm,
    /// `D⁻¹(A + I) − 𝟙𝟙ᵀ/n`; rows sum to zero.
    CenteredRowNorm,
}

impl PropagationMode {
    pub const ALL: [PropagationMode; 3] = [Self::RowNorm, Self::SymNorm, Self::CenteredRowNorm];

    pub fn name(self) -> &'static str {
        match self {
            Self::RowNorm => "row_norm",
            Self::SymNorm => "sym_norm",
            Self::CenteredRowNorm => "centered_row_norm",
        }
    }
}

impl fmt::Display for PropagationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::invalid(format!("unknown propagation `{s}` (row_norm, sym_norm, centered_row_norm)")))
    }
}

/// A propagation matrix held sparse; the centering of
/// [`PropagationMode::CenteredRowNorm`] is applied as a column-mean
/// correction and only materialized by [`PropagationOperator::dense`].
#[derive(Debug, Clone)]
pub struct PropagationOperator {
    pub mode: PropagationMode,
    factor: Arc<SparseFactor>,
}

impl PropagationOperator {
    /// Wraps an arbitrary sparse `P`, for reductions such as `P = I`.
    pub fn custom(mode: PropagationMode, p: CsrMatrix) -> Result<Self> {
        let center = mode == PropagationMode::CenteredRowNorm;
        Ok(Self {
            mode,
            factor: Arc::new(SparseFactor::new(p, center)?),
        })
    }

    pub fn factor(&self) -> &Arc<SparseFactor> {
        &self.factor
    }

    pub fn n(&self) -> usize {
        self.factor.rows()
    }

    pub fn dense(&self) -> Matrix {
        self.factor.to_dense()
    }

    pub fn apply(&self, h: &Matrix) -> Result<Matrix> {
        self.factor.apply(h)
    }
}

/// Closed-neighborhood operator of `graph`; isolated nodes keep a self-loop.
pub fn build_propagation(graph: &Graph, mode: PropagationMode) -> Result<PropagationOperator> {
    let n = graph.n_nodes();
    let mut trip = Vec::with_capacity(n + 2 * graph.edges.len());
    trip.extend((0..n).map(|i| (i, i, 1.0)));
    for &(a, b) in &graph.edges {
        trip.push((a, b, 1.0));
        trip.push((b, a, 1.0));
    }
    let mut p = CsrMatrix::from_triplets(n, n, trip)?;
    let deg = p.row_sums();
    match mode {
        PropagationMode::RowNorm | PropagationMode::CenteredRowNorm => p.scale_rows(|r| 1.0 / deg[r]),
        PropagationMode::SymNorm => {
            let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
            p.scale_rows(|r| inv_sqrt[r]);
            p.scale_cols(|c| inv_sqrt[c]);
        }
    }
    PropagationOperator::custom(mode, p)
}
