use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Node-classification graph. Edges are undirected, stored once as `(i, j)`
/// with `i < j`, without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(features: Matrix, labels: Vec<usize>, class_names: Vec<String>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::invalid("graph has no nodes"));
        }
        if labels.len() != n {
            return Err(Error::invalid(format!("{} labels for {n} nodes", labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::invalid(format!("label {l} outside {} classes", class_names.len())));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) outside {n} nodes")));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(Self {
            features,
            labels,
            class_names,
            edges: set.into_iter().collect(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub nodes: usize,
    pub undirected_edges: usize,
    pub skipped_citations: usize,
    pub self_loops_dropped: usize,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads the `*.content` / `*.cites` text layout. Content lines are
/// `id f_1 … f_k label`; cites lines are `id_a id_b`. Classes are indexed in
/// sorted name order and feature rows are scaled to unit L1 norm.
pub fn load_graph_text(content_path: &Path, cites_path: &Path) -> Result<(Graph, LoadStats)> {
    let content = fs::read_to_string(content_path).map_err(|e| Error::io(content_path, e))?;
    let cites = fs::read_to_string(cites_path).map_err(|e| Error::io(cites_path, e))?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut width = None;
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_err(content_path, lineno, "expected `id features... label`"));
        }
        let k = fields.len() - 2;
        if *width.get_or_insert(k) != k {
            return Err(parse_err(content_path, lineno, format!("{k} features, expected {}", width.unwrap())));
        }
        let feats = fields[1..=k]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| parse_err(content_path, lineno, "non-numeric feature"))?;
        if ids.insert(fields[0].to_string(), rows.len()).is_some() {
            return Err(parse_err(content_path, lineno, format!("duplicate node id {}", fields[0])));
        }
        rows.push(feats);
        raw_labels.push(fields[k + 1].to_string());
    }
    if rows.is_empty() {
        return Err(parse_err(content_path, 0, "no nodes"));
    }

    let classes: BTreeMap<&str, usize> = raw_labels
        .iter()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, name)| (name, i))
        .collect();
    let labels = raw_labels.iter().map(|l| classes[l.as_str()]).collect();
    let class_names = classes.keys().map(|s| s.to_string()).collect();

    let mut stats = LoadStats::default();
    let mut edges = Vec::new();
    for (i, line) in cites.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(parse_err(cites_path, i + 1, "expected `id_a id_b`"));
        }
        match (ids.get(fields[0]), ids.get(fields[1])) {
            (Some(&a), Some(&b)) if a == b => stats.self_loops_dropped += 1,
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => stats.skipped_citations += 1,
        }
    }
    if stats.skipped_citations > 0 {
        log::warn!(
            "{}: skipped {} citations naming unknown nodes",
            cites_path.display(),
            stats.skipped_citations
        );
    }

    let n = rows.len();
    let k = width.unwrap_or(0);
    let mut data = Vec::with_capacity(n * k);
    for row in rows {
        let l1: f64 = row.iter().map(|v| v.abs()).sum();
        let s = if l1 > 0.0 { 1.0 / l1 } else { 0.0 };
        data.extend(row.into_iter().map(|v| v * s));
    }
    let graph = Graph::new(Matrix::from_vec(n, k, data)?, labels, class_names, edges)?;
    stats.nodes = n;
    stats.undirected_edges = graph.edges.len();
    Ok((graph, stats))
}
