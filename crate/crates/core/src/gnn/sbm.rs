use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Stochastic block model with Gaussian class-prototype features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmConfig {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub features: usize,
    /// Std of the per-node noise around its class prototype.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            nodes: 600,
            classes: 4,
            p_in: 0.05,
            p_out: 0.0005,
            features: 32,
            feature_noise: 3.0,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.classes == 0 || self.nodes < 3 * self.classes || self.features == 0 {
            return Err(Error::invalid(format!(
                "sbm needs classes >= 1, features >= 1 and at least 3 nodes per class (got {} nodes, {} classes)",
                self.nodes, self.classes
            )));
        }
        if !prob(self.p_in) || !prob(self.p_out) || !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::invalid("sbm probabilities must be in [0, 1] and noise finite and >= 0"));
        }
        Ok(())
    }
}

/// Node `i` belongs to class `i mod classes`.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.nodes;
    let labels: Vec<usize> = (0..n).map(|i| i % cfg.classes).collect();
    let mut rng = SeededRng::stream(cfg.seed, "sbm-edges", 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.uniform() < p {
                edges.push((i, j));
            }
        }
    }
    let mut rng = SeededRng::stream(cfg.seed, "sbm-features", 0);
    let prototypes = rng.normal_matrix(cfg.classes, cfg.features, 0.0, 1.0);
    let mut features = rng.normal_matrix(n, cfg.features, 0.0, cfg.feature_noise);
    for (i, &l) in labels.iter().enumerate() {
        features
            .row_mut(i)
            .iter_mut()
            .zip(prototypes.row(l))
            .for_each(|(x, p)| *x += p);
    }
    let names = (0..cfg.classes).map(|c| format!("block{c}")).collect();
    Graph::new(features, labels, names, edges)
}

/// A [`SbmConfig`] from JSON text; missing fields take defaults.
pub fn sbm_from_json(text: &str) -> Result<SbmConfig> {
    let cfg: SbmConfig = serde_json::from_str(text).map_err(|e| Error::invalid(format!("sbm config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
