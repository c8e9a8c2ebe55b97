//! Rank and similarity experiments on deep attention stacks.

mod converge;
mod cosine;
mod sweep;

use std::path::Path;

pub use converge::{
    converge_fixed, converge_random, converge_with_map, random_stack, FixedPoint, FixedSpec, RandomReport, RandomSpec,
};
pub use cosine::pairwise_cosine;
pub use sweep::{gamma_grid, run_column, run_sweep, SweepCell, SweepSpec};

use crate::error::{Error, Result};
use crate::output::write_atomic;

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::invalid(format!("csv encoding: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv encoding: {}", e.error())))
}

/// Sweep table as CSV text, rows ordered by `(variant, init, gamma, depth)`.
pub fn sweep_csv(cells: &[SweepCell]) -> Result<Vec<u8>> {
    if cells.is_empty() {
        return Err(Error::invalid("refusing to write an empty sweep table"));
    }
    let mut sorted: Vec<&SweepCell> = cells.iter().collect();
    sorted.sort_by(|a, b| {
        (a.variant, a.init)
            .cmp(&(b.variant, b.init))
            .then(a.gamma.total_cmp(&b.gamma))
            .then(a.depth.cmp(&b.depth))
    });
    csv_bytes(
        &["variant", "init", "gamma", "depth", "rank", "mean_cosine"],
        sorted.into_iter().map(|c| {
            vec![
                c.variant.to_string(),
                c.init.to_string(),
                format!("{:.6}", c.gamma),
                c.depth.to_string(),
                c.rank.to_string(),
                format!("{:.10}", c.mean_pairwise_cosine),
            ]
        }),
    )
}

pub fn emit_sweep_csv(cells: &[SweepCell], path: &Path) -> Result<()> {
    write_atomic(path, &sweep_csv(cells)?)
}

pub fn fixed_csv(points: &[FixedPoint]) -> Result<Vec<u8>> {
    csv_bytes(
        &["k", "rank", "residual", "evolving_rank"],
        points.iter().map(|p| {
            vec![
                p.k.to_string(),
                p.rank.to_string(),
                format!("{:.6e}", p.residual),
                p.evolving_rank.map(|r| r.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

/// One row per trial plus a final `mean` row.
pub fn random_csv(report: &RandomReport) -> Result<Vec<u8>> {
    let trials = report
        .trial_ranks
        .iter()
        .enumerate()
        .map(|(t, r)| vec![t.to_string(), r.to_string()]);
    let mean = std::iter::once(vec!["mean".to_string(), report.mean_rank.to_string()]);
    csv_bytes(&["trial", "rank"], trials.chain(mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{BlockVariant, InitKind};

    fn cell(variant: BlockVariant, gamma: f64, depth: usize) -> SweepCell {
        SweepCell {
            variant,
            init: InitKind::Identity,
            gamma,
            depth,
            rank: 3,
            mean_pairwise_cosine: 0.25,
        }
    }

    #[test]
    fn one_cell_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        emit_sweep_csv(&[cell(BlockVariant::PostLn, -0.1, 10)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "variant,init,gamma,depth,rank,mean_cosine\npostln,identity,-0.100000,10,3,0.2500000000\n");
    }

    #[test]
    fn re_emit_is_byte_identical_and_sorted() {
        let cells = vec![
            cell(BlockVariant::ResiDual, 0.0, 0),
            cell(BlockVariant::PreLn, 0.5, 10),
            cell(BlockVariant::PreLn, -0.5, 10),
            cell(BlockVariant::PreLn, -0.5, 0),
        ];
        let a = sweep_csv(&cells).unwrap();
        let mut rev = cells.clone();
        rev.reverse();
        assert_eq!(a, sweep_csv(&rev).unwrap());
        let text = String::from_utf8(a).unwrap();
        let firsts: Vec<&str> = text.lines().skip(1).map(|l| &l[..l.find(",0").unwrap_or(l.len())]).collect();
        assert_eq!(firsts.len(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("preln,identity,-0.500000,0,"));
        assert!(text.lines().nth(4).unwrap().starts_with("residual,"));
    }

    #[test]
    fn empty_table_creates_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        assert!(emit_sweep_csv(&[], &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn converge_tables() {
        let pts = vec![FixedPoint {
            k: 1,
            rank: 2,
            residual: 0.5,
            evolving_rank: None,
        }];
        assert_eq!(String::from_utf8(fixed_csv(&pts).unwrap()).unwrap(), "k,rank,residual,evolving_rank\n1,2,5.000000e-1,\n");
        let report = RandomReport {
            trial_ranks: vec![1, 2],
            mean_rank: 1,
            mean: crate::linalg::Matrix::zeros(2, 2),
        };
        assert_eq!(String::from_utf8(random_csv(&report).unwrap()).unwrap(), "trial,rank\n0,1\n1,2\nmean,1\n");
    }
}
