use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Disjoint node index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn masks(&self, n: usize) -> [Vec<bool>; 3] {
        let mask = |idx: &[usize]| {
            let mut m = vec![false; n];
            idx.iter().for_each(|&i| m[i] = true);
            m
        };
        [mask(&self.train), mask(&self.val), mask(&self.test)]
    }

    /// Disjointness, range and train coverage of every class.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        let n = graph.n_nodes();
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::invalid(format!("split index {i} outside {n} nodes")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("node {i} appears in two split parts")));
            }
        }
        let mut covered = vec![false; graph.n_classes()];
        self.train.iter().for_each(|&i| covered[graph.labels[i]] = true);
        if let Some(c) = covered.iter().position(|&c| !c) {
            return Err(Error::invalid(format!("class {} has no training node", graph.class_names[c])));
        }
        Ok(())
    }
}

/// Per-class shuffled split with `round(f·n_c)` train and validation nodes
/// per class and the remainder for testing.
pub fn make_split(graph: &Graph, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(0.0..=1.0).contains(f)) || ((ft + fv + fs) - 1.0).abs() > 1e-9 || ft == 0.0 {
        return Err(Error::invalid(format!(
            "split fractions ({ft}, {fv}, {fs}) must be in [0, 1], sum to 1 and give a non-empty train set"
        )));
    }
    let counts = graph.class_counts();
    if let Some(c) = counts.iter().position(|&c| c < 3) {
        return Err(Error::invalid(format!(
            "class {} has {} nodes; stratified splitting needs at least 3",
            graph.class_names[c], counts[c]
        )));
    }
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..graph.n_classes() {
        let mut members: Vec<usize> = (0..graph.n_nodes()).filter(|&i| graph.labels[i] == class).collect();
        let mut rng = SeededRng::stream(seed, "split", class as u64);
        rng.shuffle(&mut members);
        let n = members.len();
        let n_train = ((ft * n as f64).round() as usize).clamp(1, n);
        let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn graph(per_class: &[usize]) -> Graph {
        let labels: Vec<usize> = per_class.iter().enumerate().flat_map(|(c, &k)| vec![c; k]).collect();
        let names = (0..per_class.len()).map(|c| format!("c{c}")).collect();
        Graph::new(Matrix::zeros(labels.len(), 1), labels, names, vec![]).unwrap()
    }

    #[test]
    fn all_train() {
        let g = graph(&[4, 5]);
        let s = make_split(&g, (1.0, 0.0, 0.0), 0).unwrap();
        assert_eq!(s.train, (0..9).collect::<Vec<_>>());
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn stratified_within_one_node() {
        let g = graph(&[17, 40, 3, 101]);
        let s = make_split(&g, (0.6, 0.2, 0.2), 7).unwrap();
        s.validate(&g).unwrap();
        for (c, &n) in g.class_counts().iter().enumerate() {
            let count = |idx: &[usize]| idx.iter().filter(|&&i| g.labels[i] == c).count() as f64;
            let n = n as f64;
            assert!((count(&s.train) - 0.6 * n).abs() <= 1.0);
            assert!((count(&s.val) - 0.2 * n).abs() <= 1.0);
            assert!((count(&s.test) - 0.2 * n).abs() <= 1.0);
        }
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), g.n_nodes());
    }

    #[test]
    fn deterministic_per_seed() {
        let g = graph(&[30, 30]);
        assert_eq!(make_split(&g, (0.6, 0.2, 0.2), 3).unwrap(), make_split(&g, (0.6, 0.2, 0.2), 3).unwrap());
        assert_ne!(make_split(&g, (0.6, 0.2, 0.2), 3).unwrap(), make_split(&g, (0.6, 0.2, 0.2), 4).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_split(&graph(&[2, 5]), (0.6, 0.2, 0.2), 0).is_err());
        assert!(make_split(&graph(&[5]), (0.6, 0.2, 0.1), 0).is_err());
        assert!(make_split(&graph(&[5]), (0.0, 0.5, 0.5), 0).is_err());
    }

    #[test]
    fn masks_match_indices() {
        let g = graph(&[5, 5]);
        let s = make_split(&g, (0.6, 0.2, 0.2), 1).unwrap();
        let [tr, va, te] = s.masks(10);
        for i in 0..10 {
            assert_eq!(u8::from(tr[i]) + u8::from(va[i]) + u8::from(te[i]), 1);
        }
    }
}
