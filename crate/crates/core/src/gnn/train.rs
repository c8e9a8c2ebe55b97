use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy, build_propagation, GcnModel, GnnConfig, GnnMode, Graph, Split};
use crate::autodiff::{Adam, Tape, Var};
use crate::error::{Error, Result};
use crate::lab::pairwise_cosine;
use crate::linalg::Matrix;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub best_val_acc: f64,
    /// Test accuracy of the best-validation checkpoint.
    pub test_acc: f64,
    pub best_epoch: usize,
    pub epochs_ran: usize,
    /// Mean pairwise cosine of the checkpoint's last hidden layer; `None`
    /// when fewer than two embeddings are nonzero.
    pub smoothness: Option<f64>,
    pub curve: Vec<EpochStat>,
}

/// Mean pairwise cosine of node embeddings.
pub fn embedding_smoothness(h: &Matrix) -> Result<f64> {
    pairwise_cosine(h)
}

fn eval_forward(model: &GcnModel, params: &[Matrix]) -> Result<(Matrix, Matrix)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = model.forward(&mut tape, &vars, None)?;
    Ok((tape.value(out.logits)?.clone(), tape.value(out.embedding)?.clone()))
}

/// Full-batch Adam training with early stopping on validation accuracy.
/// Weights come from `cfg.seed`; dropout masks from a per-epoch stream of it.
pub fn train_eval(graph: &Graph, split: &Split, cfg: &GnnConfig) -> Result<TrainReport> {
    split.validate(graph)?;
    let op = build_propagation(graph, cfg.propagation)?;
    let model = GcnModel::new(graph, &op, cfg)?;
    train_model(&model, graph, split)
}

pub fn train_model(model: &GcnModel, graph: &Graph, split: &Split) -> Result<TrainReport> {
    let cfg = model.config();
    let mut params = model.init_params(cfg.seed);
    let mut adam = Adam::new(cfg.adam);
    let mut best: Option<(f64, usize, Vec<Matrix>)> = None;
    let mut curve = Vec::new();
    let mut epochs_ran = 0;
    for epoch in 1..=cfg.epochs {
        epochs_ran = epoch;
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let mut rng = SeededRng::stream(cfg.seed, "gcn-dropout", epoch as u64);
        let out = model.forward(&mut tape, &vars, Some(&mut rng))?;
        let loss = tape.softmax_cross_entropy(out.logits, &graph.labels, &split.train)?;
        let loss_value = tape.value(loss)?.get(0, 0);
        if !loss_value.is_finite() {
            return Err(Error::Diverged { epoch, loss: loss_value });
        }
        tape.backward(loss)?;
        let grads: Vec<Matrix> = vars.iter().map(|&v| tape.grad(v)).collect::<Result<_>>()?;
        adam.step(&mut params, &grads)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }

        let (logits, _) = eval_forward(model, &params)?;
        let val_acc = accuracy(&logits, &graph.labels, &split.val);
        curve.push(EpochStat {
            epoch,
            loss: loss_value,
            train_acc: accuracy(&logits, &graph.labels, &split.train),
            val_acc,
        });
        let improved = best.as_ref().map_or(true, |(v, _, _)| val_acc > *v);
        if improved {
            best = Some((val_acc, epoch, params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= cfg.patience {
            break;
        }
    }
    let (best_val_acc, best_epoch, best_params) = best.expect("at least one epoch ran");
    let (logits, embedding) = eval_forward(model, &best_params)?;
    Ok(TrainReport {
        best_val_acc,
        test_acc: accuracy(&logits, &graph.labels, &split.test),
        best_epoch,
        epochs_ran,
        smoothness: embedding_smoothness(&embedding).ok(),
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub mode: GnnMode,
    pub depth: usize,
    pub seed: u64,
    pub best_val_acc: f64,
    pub test_acc: f64,
    pub epochs_ran: usize,
    pub smoothness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub mode: GnnMode,
    pub depth: usize,
    pub seed: u64,
}

/// Trains every key in parallel and returns reports in key order. `base`
/// supplies everything except mode, depth and seed.
pub fn run_grid(dataset: &str, graph: &Graph, split: &Split, base: &GnnConfig, keys: &[RunKey]) -> Result<Vec<RunReport>> {
    split.validate(graph)?;
    keys.par_iter()
        .map(|k| {
            let cfg = GnnConfig {
                depth: k.depth,
                seed: k.seed,
                norm: k.mode.norm(),
                propagation: k.mode.propagation(),
                ..base.clone()
            };
            let r = train_eval(graph, split, &cfg)?;
            log::info!(
                "{dataset} {} depth={} seed={} test_acc={:.4} epochs={}",
                k.mode,
                k.depth,
                k.seed,
                r.test_acc,
                r.epochs_ran
            );
            Ok(RunReport {
                dataset: dataset.to_string(),
                mode: k.mode,
                depth: k.depth,
                seed: k.seed,
                best_val_acc: r.best_val_acc,
                test_acc: r.test_acc,
                epochs_ran: r.epochs_ran,
                smoothness: r.smoothness,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub mode: GnnMode,
    pub depth: usize,
    /// Percent.
    pub mean_acc: f64,
    /// Population standard deviation, percent.
    pub std_acc: f64,
}

/// Mean and standard deviation of test accuracy per `(dataset, mode, depth)`,
/// in first-appearance order.
pub fn aggregate(reports: &[RunReport]) -> Vec<AggregateRow> {
    let mut groups: Vec<((String, GnnMode, usize), Vec<f64>)> = Vec::new();
    for r in reports {
        let key = (r.dataset.clone(), r.mode, r.depth);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.test_acc),
            None => groups.push((key, vec![r.test_acc])),
        }
    }
    groups
        .into_iter()
        .map(|((dataset, mode, depth), accs)| {
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            AggregateRow {
                dataset,
                mode,
                depth,
                mean_acc: 100.0 * mean,
                std_acc: 100.0 * var.sqrt(),
            }
        })
        .collect()
}
