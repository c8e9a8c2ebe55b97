//! Benchmark fixtures shared by the criterion targets.

use rankkeeper_core::gnn::{generate_sbm, make_split, Graph, SbmConfig, Split};
use rankkeeper_core::linalg::Matrix;
use rankkeeper_core::rng::SeededRng;

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    SeededRng::new(seed).normal_matrix(rows, cols, 0.0, 1.0)
}

/// A Cora-sized block-model graph with its 60/20/20 split.
pub fn cora_sized_graph() -> (Graph, Split) {
    let cfg = SbmConfig {
        nodes: 2708,
        classes: 7,
        p_in: 0.008,
        p_out: 0.0001,
        features: 256,
        ..SbmConfig::default()
    };
    let g = generate_sbm(&cfg).expect("valid sbm config");
    let split = make_split(&g, (0.6, 0.2, 0.2), 0).expect("enough nodes per class");
    (g, split)
}
