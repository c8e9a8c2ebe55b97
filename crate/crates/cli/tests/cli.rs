use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rankkeeper_core::lab::SweepSpec;

fn rankkeeper(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankkeeper"))
        .args(args)
        .env_remove("RANKKEEPER_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn rankkeeper")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["sweep", "--depth", "0"][..],
        &["sweep", "--gamma-step", "0"],
        &["sweep", "--variants", "sideways"],
        &["converge", "--n", "10"],
        &["converge", "--mode", "fixed", "--depth", "0"],
        &["converge", "--mode", "random", "--trials", "0"],
        &["gnn", "--dataset", "synthetic", "--seeds", "0"],
        &["gnn", "--dataset", "synthetic", "--depths", "0,2"],
        &["gnn", "--dataset", "synthetic", "--dropout", "1.0"],
        &["--jobs", "0", "converge", "--mode", "fixed"],
        &["frobnicate"],
    ] {
        assert_eq!(code(&rankkeeper(args)), 2, "{args:?}");
    }
}

#[test]
fn fixed_convergence_ends_with_rank_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fixed.csv");
    let r = rankkeeper(&["converge", "--mode", "fixed", "--n", "10", "--d", "10", "--depth", "500", "--out", p(&out)]);
    assert_eq!(code(&r), 0);
    assert!(stdout(&r).trim_end().ends_with("rank=1"), "{}", stdout(&r));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("k,rank,residual,evolving_rank\n"));
    assert_eq!(csv.lines().count(), 501);
    assert!(dir.path().join("fixed.manifest.json").is_file());
}

#[test]
fn single_trial_random_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("random.csv");
    let r = rankkeeper(&["converge", "--mode", "random", "--trials", "1", "--depth", "50", "--out", p(&out)]);
    assert_eq!(code(&r), 0);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1].split(',').nth(1), lines[2].split(',').nth(1));
}

#[test]
fn single_column_sweep_collapses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let r = rankkeeper(&[
        "sweep", "--variants", "postln", "--inits", "identity", "--gamma-min", "0", "--gamma-max", "0", "--out", p(&out),
    ]);
    assert_eq!(code(&r), 0);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 201);
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with("postln,identity,0.000000,2000,1,"), "{last}");
}

#[test]
fn default_sweep_has_expected_record_count() {
    let spec = SweepSpec::default();
    assert_eq!(spec.columns().len() * spec.recorded_depths(), 3 * 3 * 31 * 201);
}

#[test]
fn missing_data_is_actionable_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = rankkeeper(&["gnn", "--dataset", "cora", "--data-dir", p(dir.path()), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&r), 1);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("cora.content") && err.contains("cora.cites") && err.contains("RANKKEEPER_DATA_DIR"), "{err}");
}

#[test]
fn data_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("toy")).unwrap();
    let r = Command::new(env!("CARGO_BIN_EXE_rankkeeper"))
        .args(["gnn", "--dataset", "citeseer", "--out", p(&dir.path().join("o"))])
        .env("RANKKEEPER_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains(p(dir.path())));
}

#[test]
fn synthetic_gnn_runs_offline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let r = rankkeeper(&[
        "gnn", "--dataset", "synthetic", "--mode", "vanilla,centered", "--depths", "2,4", "--seeds", "2", "--out", p(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 5);
    assert!(agg.starts_with("dataset,mode,depth,mean_acc,std_acc\nsynthetic,vanilla,2,"));
    assert_eq!(fs::read_dir(out.join("runs")).unwrap().count(), 8);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("runs/synthetic-centered-d4-s1.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "centered");
    assert_eq!(report["depth"], 4);
}

#[test]
fn sbm_config_file_is_used_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sbm.json");
    fs::write(&cfg, r#"{"nodes": 90, "classes": 3, "seed": 4}"#).unwrap();
    let out = dir.path().join("g");
    let r = rankkeeper(&[
        "gnn", "--dataset", "synthetic", "--sbm-config", p(&cfg), "--depths", "2", "--seeds", "1", "--out", p(&out),
    ]);
    assert_eq!(code(&r), 0);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["sbm"]["nodes"], 90);
    fs::write(&cfg, r#"{"nodez": 90}"#).unwrap();
    let bad = rankkeeper(&["gnn", "--dataset", "synthetic", "--sbm-config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&bad), 2);
}

fn assert_same_files(a: &Path, b: &Path) {
    if a.is_dir() {
        let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names.into_iter().filter(|n| n != "manifest.json") {
            assert_same_files(&a.join(&name), &b.join(&name));
        }
    } else {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{} vs {}", a.display(), b.display());
    }
}

#[test]
fn replay_reproduces_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s);

    let r = rankkeeper(&["sweep", "--depth", "60", "--n", "12", "--d", "8", "--gamma-step", "0.5", "--seed", "3", "--out", p(&d("s.csv"))]);
    assert_eq!(code(&r), 0);
    assert_eq!(code(&rankkeeper(&["replay", p(&d("s.manifest.json")), "--out", p(&d("s2.csv"))])), 0);
    assert_same_files(&d("s.csv"), &d("s2.csv"));

    let r = rankkeeper(&["converge", "--mode", "random", "--n", "8", "--d", "8", "--depth", "40", "--trials", "5", "--out", p(&d("c.csv"))]);
    assert_eq!(code(&r), 0);
    assert_eq!(code(&rankkeeper(&["replay", p(&d("c.manifest.json")), "--out", p(&d("c2.csv"))])), 0);
    assert_same_files(&d("c.csv"), &d("c2.csv"));

    let r = rankkeeper(&["gnn", "--dataset", "synthetic", "--depths", "2,3", "--seeds", "2", "--epochs", "50", "--out", p(&d("g"))]);
    assert_eq!(code(&r), 0);
    assert_eq!(code(&rankkeeper(&["replay", p(&d("g/manifest.json")), "--out", p(&d("g2"))])), 0);
    assert_same_files(&d("g"), &d("g2"));
}

#[test]
fn job_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s);
    for (jobs, name) in [("1", "a"), ("3", "b")] {
        let r = rankkeeper(&[
            "--jobs", jobs, "sweep", "--depth", "30", "--n", "10", "--d", "6", "--gamma-step", "0.75", "--out",
            p(&d(&format!("{name}.csv"))),
        ]);
        assert_eq!(code(&r), 0);
        let r = rankkeeper(&[
            "--jobs", jobs, "gnn", "--dataset", "synthetic", "--depths", "2", "--seeds", "3", "--epochs", "30", "--out",
            p(&d(name)),
        ]);
        assert_eq!(code(&r), 0);
    }
    assert_same_files(&d("a.csv"), &d("b.csv"));
    assert_same_files(&d("a"), &d("b"));
}
