use std::fs;

use rankkeeper_core::gnn::{
    aggregate, build_propagation, generate_sbm, load_graph_text, make_split, run_grid, GnnConfig, GnnMode, Graph,
    PropagationMode, RunKey, SbmConfig,
};
use rankkeeper_core::linalg::Matrix;
use rankkeeper_core::rng::derive_seed;

fn assert_centered_kills_ones(g: &Graph) {
    let op = build_propagation(g, PropagationMode::CenteredRowNorm).unwrap();
    let ones = Matrix::filled(g.n_nodes(), 1, 1.0);
    let out = op.apply(&ones).unwrap();
    assert!(out.as_slice().iter().all(|v| v.abs() < 1e-9));
    let dense = op.dense().matmul(&ones).unwrap();
    assert!(dense.as_slice().iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn centered_operator_annihilates_constants_on_sbm() {
    for seed in 0..3 {
        assert_centered_kills_ones(&generate_sbm(&SbmConfig { seed, ..SbmConfig::default() }).unwrap());
    }
}

#[test]
fn centered_operator_annihilates_constants_on_loaded_graph() {
    let dir = tempfile::tempdir().unwrap();
    let content = dir.path().join("toy.content");
    let cites = dir.path().join("toy.cites");
    fs::write(
        &content,
        "p1 1 0 1 0 AI\np2 0 1 0 0 DB\np3 1 1 0 0 AI\np4 0 0 0 1 IR\np5 0 0 1 1 DB\np6 1 0 0 0 IR\n",
    )
    .unwrap();
    fs::write(&cites, "p1 p2\np2 p3\np3 p1\np4 p5\np9 p1\np6 p6\n").unwrap();
    let (g, stats) = load_graph_text(&content, &cites).unwrap();
    assert_eq!((stats.nodes, stats.undirected_edges, stats.skipped_citations, stats.self_loops_dropped), (6, 4, 1, 1));
    assert_centered_kills_ones(&g);
}

#[test]
fn centered_beats_vanilla_deep_on_sbm() {
    let g = generate_sbm(&SbmConfig::default()).unwrap();
    // same seed derivation as `rankkeeper gnn --seed 0`
    let split = make_split(&g, (0.6, 0.2, 0.2), derive_seed(0, "split", 0)).unwrap();
    let keys: Vec<RunKey> = [GnnMode::Vanilla, GnnMode::Centered]
        .into_iter()
        .flat_map(|mode| {
            (0..5).map(move |k| RunKey {
                mode,
                depth: 16,
                seed: derive_seed(0, "gnn-run", k),
            })
        })
        .collect();
    let reports = run_grid("sbm", &g, &split, &GnnConfig::default(), &keys).unwrap();
    let rows = aggregate(&reports);
    let (vanilla, centered) = (&rows[0], &rows[1]);
    assert!(centered.mean_acc >= vanilla.mean_acc, "{rows:?}");
    let smooth = |mode| {
        let s: Vec<f64> = reports.iter().filter(|r| r.mode == mode).filter_map(|r| r.smoothness).collect();
        s.iter().sum::<f64>() / s.len() as f64
    };
    assert!(smooth(GnnMode::Vanilla) > smooth(GnnMode::Centered));
}
