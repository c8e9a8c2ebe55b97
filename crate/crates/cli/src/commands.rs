use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rankkeeper_core::attention::{BlockVariant, InitKind};
use rankkeeper_core::gnn::{
    aggregate, aggregate_csv, generate_sbm, load_graph_text, make_split, report_json, run_grid, sbm_from_json,
    GnnConfig, GnnMode, Graph, RunKey, SbmConfig,
};
use rankkeeper_core::lab::{
    converge_fixed, converge_random, emit_sweep_csv, fixed_csv, gamma_grid, random_csv, run_sweep, FixedSpec,
    RandomSpec, SweepSpec,
};
use rankkeeper_core::output::write_atomic;
use rankkeeper_core::rng::derive_seed;
use rankkeeper_core::RankConfig;
use serde::{Deserialize, Serialize};

use crate::manifest::{manifest_path_for, RunManifest};

/// Bad flags or flag combinations; exits with status 2.
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl fmt::Display) -> anyhow::Error {
    UsageError::new(e.to_string()).into()
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, default_value_t = -1.5, allow_hyphen_values = true)]
    pub gamma_min: f64,
    #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
    pub gamma_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gamma_step: f64,
    #[arg(long, default_value_t = 2000)]
    pub depth: usize,
    #[arg(long, value_delimiter = ',', default_values_t = BlockVariant::ALL)]
    pub variants: Vec<BlockVariant>,
    #[arg(long, value_delimiter = ',', default_values_t = InitKind::ALL)]
    pub inits: Vec<InitKind>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    /// Singular-value threshold of the numerical rank.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

impl SweepArgs {
    fn spec(&self) -> Result<SweepSpec> {
        if self.depth == 0 {
            bail!(usage("--depth must be at least 1"));
        }
        let spec = SweepSpec {
            gammas: gamma_grid(self.gamma_min, self.gamma_max, self.gamma_step).map_err(usage)?,
            max_depth: self.depth,
            record_every: self.record_every,
            variants: self.variants.clone(),
            inits: self.inits.clone(),
            n_tokens: self.n,
            dim: self.d,
            rank_cfg: RankConfig {
                epsilon: self.epsilon,
                ..RankConfig::default()
            },
            base_seed: self.seed,
            ..SweepSpec::default()
        };
        spec.validate().map_err(usage)?;
        Ok(spec)
    }
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let start = Instant::now();
    let spec = args.spec()?;
    log::info!("sweep: {} columns x {} recorded depths", spec.columns().len(), spec.recorded_depths());
    let cells = run_sweep(&spec)?;
    emit_sweep_csv(&cells, &args.out)?;
    for c in cells.iter().filter(|c| c.depth == spec.max_depth) {
        println!(
            "{} {} gamma={:.6} depth={} rank={} cosine={:.6}",
            c.variant, c.init, c.gamma, c.depth, c.rank, c.mean_pairwise_cosine
        );
    }
    let manifest = RunManifest::new("sweep", &args, args.seed, vec![args.out.clone()], start.elapsed())?;
    manifest.write(&manifest_path_for(&args.out))
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvergeMode {
    /// One attention map, frozen and applied repeatedly.
    Fixed,
    /// Fresh random weights per layer, averaged over trials.
    Random,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeArgs {
    #[arg(long, value_enum)]
    pub mode: ConvergeMode,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 500)]
    pub depth: usize,
    /// Random mode only.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "converge.csv")]
    pub out: PathBuf,
}

pub fn converge(args: ConvergeArgs) -> Result<()> {
    let start = Instant::now();
    if args.depth == 0 || args.n < 2 || args.d == 0 {
        bail!(usage(format!(
            "converge needs --depth >= 1, --n >= 2 and --d >= 1 (got depth={}, n={}, d={})",
            args.depth, args.n, args.d
        )));
    }
    match args.mode {
        ConvergeMode::Fixed => {
            let points = converge_fixed(&FixedSpec::new(args.n, args.d, args.depth, args.seed))?;
            write_atomic(&args.out, &fixed_csv(&points)?)?;
            let last = points.last().expect("depth >= 1");
            println!(
                "mode=fixed n={} d={} depth={} seed={} residual={:.3e} evolving_rank={} rank={}",
                args.n,
                args.d,
                args.depth,
                args.seed,
                last.residual,
                last.evolving_rank.map_or_else(|| "-".to_string(), |r| r.to_string()),
                last.rank
            );
        }
        ConvergeMode::Random => {
            if args.trials == 0 {
                bail!(usage("--trials must be at least 1"));
            }
            let report = converge_random(&RandomSpec::new(args.n, args.d, args.depth, args.trials, args.seed))?;
            write_atomic(&args.out, &random_csv(&report)?)?;
            let max_trial = report.trial_ranks.iter().max().copied().unwrap_or(0);
            println!(
                "mode=random n={} d={} depth={} trials={} seed={} max_trial_rank={} rank={}",
                args.n, args.d, args.depth, args.trials, args.seed, max_trial, report.mean_rank
            );
        }
    }
    let manifest = RunManifest::new("converge", &args, args.seed, vec![args.out.clone()], start.elapsed())?;
    manifest.write(&manifest_path_for(&args.out))
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Cora,
    Citeseer,
    /// Stochastic block model; needs no files.
    Synthetic,
}

impl Dataset {
    fn name(self) -> &'static str {
        match self {
            Dataset::Cora => "cora",
            Dataset::Citeseer => "citeseer",
            Dataset::Synthetic => "synthetic",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GnnArgs {
    #[arg(long, value_enum)]
    pub dataset: Dataset,
    /// Directory holding `<name>.content` and `<name>.cites`, directly or in `<name>/`.
    #[arg(long, env = "RANKKEEPER_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long = "mode", alias = "modes", value_delimiter = ',', default_values_t = GnnMode::ALL)]
    pub modes: Vec<GnnMode>,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8, 16, 32])]
    pub depths: Vec<usize>,
    /// Number of initialization/dropout seeds per (mode, depth).
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.6)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    /// Base seed for the split and all run seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON stochastic-block-model config for `--dataset synthetic`.
    #[arg(long)]
    pub sbm_config: Option<PathBuf>,
    /// Resolved block-model config, filled in before the run.
    #[arg(skip)]
    pub sbm: Option<SbmConfig>,
    /// Output directory.
    #[arg(long, default_value = "gnn-out")]
    pub out: PathBuf,
}

impl GnnArgs {
    fn base_config(&self) -> Result<GnnConfig> {
        if self.seeds == 0 {
            bail!(usage("--seeds must be at least 1"));
        }
        if self.modes.is_empty() || self.depths.is_empty() {
            bail!(usage("need at least one --mode and one depth"));
        }
        if self.depths.contains(&0) {
            bail!(usage("depths must be at least 1"));
        }
        let mut cfg = GnnConfig {
            hidden: self.hidden,
            dropout: self.dropout,
            epochs: self.epochs,
            patience: self.patience,
            ..GnnConfig::default()
        };
        cfg.adam.lr = self.lr;
        cfg.adam.weight_decay = self.weight_decay;
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    fn keys(&self) -> Vec<(usize, RunKey)> {
        let mut keys = Vec::new();
        for &mode in &self.modes {
            for &depth in &self.depths {
                for k in 0..self.seeds {
                    let seed = derive_seed(self.seed, "gnn-run", k as u64);
                    keys.push((k, RunKey { mode, depth, seed }));
                }
            }
        }
        keys
    }
}

fn dataset_files(dir: &Path, name: &str) -> Result<(PathBuf, PathBuf)> {
    for base in [dir.to_path_buf(), dir.join(name)] {
        let content = base.join(format!("{name}.content"));
        let cites = base.join(format!("{name}.cites"));
        if content.is_file() && cites.is_file() {
            return Ok((content, cites));
        }
    }
    bail!(
        "{name} data not found: expected {name}.content and {name}.cites in {} or {}; \
         pass --data-dir or set RANKKEEPER_DATA_DIR (nothing is downloaded)",
        dir.display(),
        dir.join(name).display()
    )
}

fn load_dataset(args: &mut GnnArgs) -> Result<Graph> {
    if args.dataset == Dataset::Synthetic {
        if args.sbm.is_none() {
            args.sbm = Some(match &args.sbm_config {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    sbm_from_json(&text).map_err(usage)?
                }
                None => SbmConfig::default(),
            });
        }
        return Ok(generate_sbm(args.sbm.as_ref().expect("resolved above"))?);
    }
    let dir = args.data_dir.get_or_insert_with(|| PathBuf::from("data")).clone();
    let (content, cites) = dataset_files(&dir, args.dataset.name())?;
    let (graph, stats) = load_graph_text(&content, &cites)?;
    log::info!(
        "{}: {} nodes, {} edges, {} classes, {} features",
        args.dataset.name(),
        stats.nodes,
        stats.undirected_edges,
        graph.n_classes(),
        graph.n_features()
    );
    Ok(graph)
}

pub fn gnn(mut args: GnnArgs) -> Result<()> {
    let start = Instant::now();
    let base = args.base_config()?;
    let graph = load_dataset(&mut args)?;
    let name = args.dataset.name();
    let split = make_split(&graph, (0.6, 0.2, 0.2), derive_seed(args.seed, "split", 0))?;
    let keyed = args.keys();
    let keys: Vec<RunKey> = keyed.iter().map(|(_, k)| k.clone()).collect();
    let reports = run_grid(name, &graph, &split, &base, &keys)?;

    let mut outputs = Vec::with_capacity(reports.len() + 1);
    for ((k, key), report) in keyed.iter().zip(&reports) {
        let path = args.out.join("runs").join(format!("{name}-{}-d{}-s{k}.json", key.mode, key.depth));
        write_atomic(&path, &report_json(report)?)?;
        outputs.push(path);
    }
    let rows = aggregate(&reports);
    let agg_path = args.out.join("aggregate.csv");
    write_atomic(&agg_path, &aggregate_csv(&rows)?)?;
    outputs.push(agg_path);
    for r in &rows {
        println!("{} {} depth={} acc={:.2}±{:.2}", r.dataset, r.mode, r.depth, r.mean_acc, r.std_acc);
    }
    let manifest = RunManifest::new("gnn", &args, args.seed, outputs, start.elapsed())?;
    manifest.write(&args.out.join("manifest.json"))
}

pub fn replay(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let m = RunManifest::read(path)?;
    let config = m.config;
    match m.command.as_str() {
        "sweep" => {
            let mut a: SweepArgs = serde_json::from_value(config).context("manifest config")?;
            if let Some(o) = out {
                a.out = o;
            }
            sweep(a)
        }
        "converge" => {
            let mut a: ConvergeArgs = serde_json::from_value(config).context("manifest config")?;
            if let Some(o) = out {
                a.out = o;
            }
            converge(a)
        }
        "gnn" => {
            let mut a: GnnArgs = serde_json::from_value(config).context("manifest config")?;
            if let Some(o) = out {
                a.out = o;
            }
            gnn(a)
        }
        other => bail!("manifest {} names unknown command `{other}`", path.display()),
    }
}
