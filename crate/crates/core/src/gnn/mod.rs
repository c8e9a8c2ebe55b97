//! Node classification with deep GCNs and the centered propagation operator.

mod graph;
mod model;
mod propagation;
mod sbm;
mod split;
mod train;

pub use graph::{load_graph_text, Graph, LoadStats};
pub use model::{accuracy, Forward, GcnModel, GnnConfig, GnnMode, NormKind};
pub use propagation::{build_propagation, PropagationMode, PropagationOperator};
pub use sbm::{generate_sbm, sbm_from_json, SbmConfig};
pub use split::{make_split, Split};
pub use train::{
    aggregate, embedding_smoothness, run_grid, train_eval, train_model, AggregateRow, EpochStat, RunKey, RunReport,
    TrainReport,
};

use crate::error::{Error, Result};

/// Aggregate rows as CSV: `dataset,mode,depth,mean_acc,std_acc`.
pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::invalid(format!("csv encoding: {e}"));
    w.write_record(["dataset", "mode", "depth", "mean_acc", "std_acc"]).map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.mode.to_string(),
            r.depth.to_string(),
            format!("{:.2}", r.mean_acc),
            format!("{:.2}", r.std_acc),
        ])
        .map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv encoding: {}", e.error())))
}

/// Pretty JSON for one run, newline-terminated.
pub fn report_json(report: &RunReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report).map_err(|e| Error::invalid(format!("json encoding: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}
