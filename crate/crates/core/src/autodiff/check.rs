//! Central finite-difference gradient checks.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Magnitude below which a gradient counts as zero for [`relative_error`].
const FLOOR: f64 = 1e-6;

const REFINE_ABOVE: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    /// Entries whose difference at `h` disagreed and that were re-measured
    /// with smaller steps (a kink such as ReLU at 0 within `h`).
    pub refined: usize,
    pub max_rel_err: f64,
    /// `(input, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` with central
/// differences of step `h`. An entry that disagrees at `h` is re-measured at
/// `h/10` and `h/100` and keeps its best error: a step straddling a kink
/// shrinks away, a wrong gradient disagrees at every step. `entries` selects
/// `(input, flat index)` pairs; `None` checks every entry of every input.
pub fn check_gradients(
    inputs: &[Matrix],
    entries: Option<&[(usize, usize)]>,
    h: f64,
    f: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<GradCheck> {
    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.param(m.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss)?.get(0, 0))
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let grads: Vec<Matrix> = vars.iter().map(|&v| tape.grad(v)).collect::<Result<_>>()?;

    let all: Vec<(usize, usize)>;
    let entries = match entries {
        Some(e) => e,
        None => {
            all = inputs
                .iter()
                .enumerate()
                .flat_map(|(i, m)| (0..m.as_slice().len()).map(move |j| (i, j)))
                .collect();
            &all
        }
    };
    let mut report = GradCheck {
        checked: 0,
        refined: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    let mut work = inputs.to_vec();
    for &(i, j) in entries {
        if i >= work.len() || j >= work[i].as_slice().len() {
            return Err(Error::invalid(format!("gradient check entry ({i}, {j}) out of range")));
        }
        let analytic = grads[i].as_slice()[j];
        let mut central = |step: f64| -> Result<f64> {
            let orig = work[i].as_slice()[j];
            work[i].as_mut_slice()[j] = orig + step;
            let up = eval(&work)?;
            work[i].as_mut_slice()[j] = orig - step;
            let down = eval(&work)?;
            work[i].as_mut_slice()[j] = orig;
            Ok((up - down) / (2.0 * step))
        };
        let mut numeric = central(h)?;
        let mut err = relative_error(analytic, numeric);
        if err > REFINE_ABOVE {
            report.refined += 1;
            for step in [h / 10.0, h / 100.0] {
                let n = central(step)?;
                let e = relative_error(analytic, n);
                if e < err {
                    (numeric, err) = (n, e);
                }
            }
        }
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = Some((i, j, analytic, numeric));
        }
    }
    Ok(report)
}
