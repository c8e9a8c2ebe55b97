use rankkeeper_core::attention::{BlockVariant, InitKind};
use rankkeeper_core::lab::{
    converge_fixed, converge_random, emit_sweep_csv, gamma_grid, run_column, run_sweep, FixedSpec, RandomSpec, SweepSpec,
};

fn cosine_at_depth(gamma: f64) -> f64 {
    let spec = SweepSpec {
        gammas: vec![gamma],
        n_tokens: 20,
        dim: 20,
        ..SweepSpec::default()
    };
    let cells = run_column(&spec, BlockVariant::PostLn, InitKind::StdNormal, gamma).unwrap();
    let last = cells.last().unwrap();
    assert_eq!(last.depth, 2000);
    last.mean_pairwise_cosine
}

#[test]
fn cosine_diagnostic_separates_gamma_zero_from_minus_one() {
    let collapsed = cosine_at_depth(0.0);
    let centered = cosine_at_depth(-1.0);
    assert!(collapsed >= 0.99, "gamma 0: {collapsed}");
    assert!(centered <= 0.9, "gamma -1: {centered}");
}

#[test]
fn fixed_map_rank_never_increases() {
    for seed in 0..20u64 {
        let points = converge_fixed(&FixedSpec::new(10 + (seed as usize % 3) * 10, 10, 200, seed)).unwrap();
        for w in points.windows(2) {
            assert!(w[1].rank <= w[0].rank, "seed {seed} k={}: {} -> {}", w[1].k, w[0].rank, w[1].rank);
        }
        assert_eq!(points.last().unwrap().rank, 1, "seed {seed}");
    }
}

#[test]
fn fixed_map_converges_with_small_residual() {
    for n in [10, 20, 50] {
        for seed in 0..20u64 {
            let mut spec = FixedSpec::new(n, n, 500, seed);
            spec.evolving = false;
            let last = converge_fixed(&spec).unwrap().pop().unwrap();
            assert_eq!(last.rank, 1, "n={n} seed={seed}");
            assert!(last.residual < 1e-8, "n={n} seed={seed}: {}", last.residual);
        }
    }
}

#[test]
fn single_trial_is_one_stack() {
    let spec = RandomSpec::new(8, 6, 30, 1, 4);
    let report = converge_random(&spec).unwrap();
    let stack = rankkeeper_core::lab::random_stack(&spec, 0).unwrap();
    assert_eq!(report.mean, stack);
    assert_eq!(report.trial_ranks.len(), 1);
}

#[test]
fn experiments_are_pure_functions_of_spec() {
    let spec = SweepSpec {
        gammas: gamma_grid(-1.0, 0.0, 0.5).unwrap(),
        max_depth: 40,
        n_tokens: 8,
        dim: 6,
        base_seed: 9,
        ..SweepSpec::default()
    };
    let a = run_sweep(&spec).unwrap();
    assert_eq!(a, run_sweep(&spec).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let (p, q) = (dir.path().join("a.csv"), dir.path().join("b/c.csv"));
    emit_sweep_csv(&a, &p).unwrap();
    emit_sweep_csv(&run_sweep(&spec).unwrap(), &q).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());

    let r = RandomSpec::new(10, 10, 50, 8, 3);
    assert_eq!(converge_random(&r).unwrap(), converge_random(&r).unwrap());
    let f = FixedSpec::new(10, 10, 50, 3);
    assert_eq!(converge_fixed(&f).unwrap(), converge_fixed(&f).unwrap());
}
