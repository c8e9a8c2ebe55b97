//! Define-by-run reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] owns every value computed on it; a [`Var`] is a cheap handle.
//! Build a fresh tape per step, read gradients after [`Tape::backward`].

mod adam;
mod check;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use adam::{Adam, AdamConfig};
pub use check::{check_gradients, relative_error, GradCheck};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};
use crate::rng::SeededRng;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// A constant sparse left factor `P`, with `Pᵀ` kept for the backward pass.
/// With `center` set the product is `(P − 𝟙𝟙ᵀ/n)·X`, applied as `P·X` minus
/// the column means of `X` so the dense rank-one term is never formed.
#[derive(Debug, Clone)]
pub struct SparseFactor {
    p: CsrMatrix,
    pt: CsrMatrix,
    center: bool,
}

impl SparseFactor {
    pub fn new(p: CsrMatrix, center: bool) -> Result<Self> {
        if center && p.rows() != p.cols() {
            return Err(Error::NotSquare {
                op: "centered sparse factor",
                rows: p.rows(),
                cols: p.cols(),
            });
        }
        let pt = p.transpose();
        Ok(Self { p, pt, center })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.p
    }

    pub fn is_centered(&self) -> bool {
        self.center
    }

    pub fn rows(&self) -> usize {
        self.p.rows()
    }

    /// Forward product without a tape.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        apply_sparse(&self.p, x, self.center)
    }

    /// Dense form, including the centering term.
    pub fn to_dense(&self) -> Matrix {
        let mut d = self.p.to_dense();
        if self.center {
            let n = d.rows() as f64;
            d.as_mut_slice().iter_mut().for_each(|v| *v -= 1.0 / n);
        }
        d
    }
}

fn apply_sparse(p: &CsrMatrix, x: &Matrix, center: bool) -> Result<Matrix> {
    let mut out = p.matmul_dense(x)?;
    if center {
        let means = x.col_means();
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(&means).for_each(|(v, m)| *v -= m);
        }
    }
    Ok(out)
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Sparse(Arc<SparseFactor>, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    AddRowBias(Var, Var),
    MulRow(Var, Var),
    ConstMul(Var, f64),
    Relu(Var),
    RowSoftmax(Var),
    Dropout(Var, Matrix),
    RowL2Norm(Var),
    LayerNorm(Var, Vec<f64>),
    PairNorm { x: Var, scale: f64, rms: f64 },
    Sum(Var),
    SoftmaxCrossEntropy { logits: Var, probs: Matrix, labels: Vec<usize>, mask: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    needs_grad: bool,
    op: Op,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable input.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    fn push(&mut self, value: Matrix, needs_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(Error::Tape(format!("variable belongs to tape {}, not {}", v.tape, self.id)));
        }
        self.nodes
            .get(v.index)
            .ok_or_else(|| Error::Tape(format!("no node {} on tape", v.index)))
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].needs_grad)
    }

    fn derived(&mut self, value: Matrix, inputs: &[Var], op: Op) -> Var {
        let needs = self.needs(inputs);
        self.push(value, needs, op)
    }

    pub fn value(&self, v: Var) -> Result<&Matrix> {
        self.node(v).map(|n| &n.value)
    }

    /// Accumulated gradient, zeros if backward never reached `v`.
    pub fn grad(&self, v: Var) -> Result<Matrix> {
        let node = self.node(v)?;
        Ok(node
            .grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols())))
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.grad = None);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.node(a)?.value.matmul(&self.node(b)?.value)?;
        Ok(self.derived(value, &[a, b], Op::MatMul(a, b)))
    }

    /// `P·x` for a constant sparse `P`.
    pub fn sparse_matmul(&mut self, p: &Arc<SparseFactor>, x: Var) -> Result<Var> {
        let value = p.apply(&self.node(x)?.value)?;
        Ok(self.derived(value, &[x], Op::Sparse(Arc::clone(p), x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.node(a)?.value.add(&self.node(b)?.value)?;
        Ok(self.derived(value, &[a, b], Op::Add(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.node(a)?.value.hadamard(&self.node(b)?.value)?;
        Ok(self.derived(value, &[a, b], Op::Hadamard(a, b)))
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.broadcast_row("add_row_bias", a, bias, |x, b| x + b)?;
        Ok(self.derived(value, &[a, bias], Op::AddRowBias(a, bias)))
    }

    /// Multiplies every row of `a` entrywise by the `1 x c` row `gain`.
    pub fn mul_row(&mut self, a: Var, gain: Var) -> Result<Var> {
        let value = self.broadcast_row("mul_row", a, gain, |x, g| x * g)?;
        Ok(self.derived(value, &[a, gain], Op::MulRow(a, gain)))
    }

    fn broadcast_row(&self, op: &'static str, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        let (x, r) = (&self.node(a)?.value, &self.node(row)?.value);
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(shape_err(op, x, r));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            out.row_mut(i).iter_mut().zip(r.row(0)).for_each(|(v, &b)| *v = f(*v, b));
        }
        Ok(out)
    }

    pub fn const_mul(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.node(a)?.value.scale(c);
        Ok(self.derived(value, &[a], Op::ConstMul(a, c)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.node(a)?.value.map(|v| v.max(0.0));
        Ok(self.derived(value, &[a], Op::Relu(a)))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.node(a)?.value.softmax_rows()?;
        Ok(self.derived(value, &[a], Op::RowSoftmax(a)))
    }

    /// Inverted dropout: drops each entry with probability `p` and scales the
    /// survivors by `1/(1−p)`. Identity when `p = 0` or outside training.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut SeededRng, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout rate {p} outside [0, 1)")));
        }
        if p == 0.0 || !training {
            return Ok(a);
        }
        let (rows, cols) = self.node(a)?.value.shape();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        self.dropout_with_mask(a, Matrix::from_vec(rows, cols, mask)?)
    }

    /// Dropout with a caller-supplied, already scaled mask.
    pub fn dropout_with_mask(&mut self, a: Var, mask: Matrix) -> Result<Var> {
        let value = self.node(a)?.value.hadamard(&mask).map_err(|_| shape_err("dropout", &self.nodes[a.index].value, &mask))?;
        Ok(self.derived(value, &[a], Op::Dropout(a, mask)))
    }

    /// Rows scaled to unit L2 norm; zero rows stay zero.
    pub fn row_l2norm(&mut self, a: Var) -> Result<Var> {
        let value = self.node(a)?.value.row_l2_normalize();
        Ok(self.derived(value, &[a], Op::RowL2Norm(a)))
    }

    /// Per-row standardization `(x − μ)/√(σ² + eps)` without affine terms.
    pub fn layernorm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let x = &self.node(a)?.value;
        let mut value = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        let c = x.cols() as f64;
        for r in 0..x.rows() {
            let row = value.row_mut(r);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
            let s = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * s);
            inv_std.push(s);
        }
        Ok(self.derived(value, &[a], Op::LayerNorm(a, inv_std)))
    }

    /// Centers columns, then rescales so the mean squared row norm is
    /// `scale²`. An input with identical rows maps to zeros.
    pub fn pairnorm(&mut self, a: Var, scale: f64) -> Result<Var> {
        let x = &self.node(a)?.value;
        if x.rows() < 2 {
            return Err(Error::invalid("pairnorm needs at least two rows"));
        }
        let mut centered = x.clone();
        let means = x.col_means();
        for r in 0..centered.rows() {
            centered.row_mut(r).iter_mut().zip(&means).for_each(|(v, m)| *v -= m);
        }
        let rms = (centered.as_slice().iter().map(|v| v * v).sum::<f64>() / x.rows() as f64).sqrt();
        let value = if rms > 0.0 {
            centered.scale(scale / rms)
        } else {
            Matrix::zeros(x.rows(), x.cols())
        };
        Ok(self.derived(value, &[a], Op::PairNorm { x: a, scale, rms }))
    }

    /// Sum of all entries, as a `1 x 1` value.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.node(a)?.value.sum();
        Ok(self.derived(Matrix::filled(1, 1, total), &[a], Op::Sum(a)))
    }

    /// Mean over `mask` rows of `−log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
        let z = &self.node(logits)?.value;
        if mask.is_empty() {
            return Err(Error::invalid("cross-entropy over an empty mask"));
        }
        if labels.len() != z.rows() {
            return Err(Error::invalid(format!("{} labels for {} logit rows", labels.len(), z.rows())));
        }
        let classes = z.cols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {bad} outside {classes} classes")));
        }
        if let Some(&bad) = mask.iter().find(|&&m| m >= z.rows()) {
            return Err(Error::invalid(format!("mask row {bad} outside {} rows", z.rows())));
        }
        let mut probs = Matrix::zeros(mask.len(), classes);
        let mut loss = 0.0;
        for (i, &r) in mask.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[r]];
            probs.row_mut(i).iter_mut().zip(row).for_each(|(p, v)| *p = (v - lse).exp());
        }
        let value = Matrix::filled(1, 1, loss / mask.len() as f64);
        Ok(self.derived(
            value,
            &[logits],
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }

    /// Accumulates `d loss / d v` into every node that needs a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.node(loss)?.value.shape();
        if shape != (1, 1) {
            return Err(Error::Tape(format!("backward needs a 1x1 loss, got {}x{}", shape.0, shape.1)));
        }
        self.accumulate(loss.index, Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.index).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            self.propagate(i, &g)?;
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, index: usize, g: Matrix) {
        let node = &mut self.nodes[index];
        if !node.needs_grad {
            return;
        }
        match &mut node.grad {
            Some(acc) => acc
                .add_scaled_assign(1.0, &g)
                .expect("gradient shape matches its node"),
            None => node.grad = Some(g),
        }
    }

    fn propagate(&mut self, i: usize, g: &Matrix) -> Result<()> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.index].value;
        let mut out: Vec<(usize, Matrix)> = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                out.push((a.index, g.matmul_transpose(val(*b))?));
                out.push((b.index, val(*a).transpose_matmul(g)?));
            }
            Op::Sparse(p, x) => out.push((x.index, apply_sparse(&p.pt, g, p.center)?)),
            Op::Add(a, b) => {
                out.push((a.index, g.clone()));
                out.push((b.index, g.clone()));
            }
            Op::Hadamard(a, b) => {
                out.push((a.index, g.hadamard(val(*b))?));
                out.push((b.index, g.hadamard(val(*a))?));
            }
            Op::AddRowBias(a, bias) => {
                out.push((a.index, g.clone()));
                out.push((bias.index, column_sums(g)));
            }
            Op::MulRow(a, gain) => {
                let gv = val(*gain).row(0);
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    ga.row_mut(r).iter_mut().zip(gv).for_each(|(v, s)| *v *= s);
                }
                out.push((a.index, ga));
                out.push((gain.index, column_sums(&g.hadamard(val(*a))?)));
            }
            Op::ConstMul(a, c) => out.push((a.index, g.scale(*c))),
            Op::Relu(a) => {
                let mask = val(*a);
                let mut ga = g.clone();
                ga.as_mut_slice()
                    .iter_mut()
                    .zip(mask.as_slice())
                    .for_each(|(v, &x)| if x <= 0.0 { *v = 0.0 });
                out.push((a.index, ga));
            }
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    let yr = y.row(r);
                    let dot: f64 = ga.row(r).iter().zip(yr).map(|(g, y)| g * y).sum();
                    ga.row_mut(r).iter_mut().zip(yr).for_each(|(v, y)| *v = y * (*v - dot));
                }
                out.push((a.index, ga));
            }
            Op::Dropout(a, mask) => out.push((a.index, g.hadamard(mask)?)),
            Op::RowL2Norm(a) => {
                let x = val(*a);
                let y = &node.value;
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    let norm = l2(x.row(r));
                    if norm == 0.0 {
                        ga.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let yr = y.row(r);
                    let dot: f64 = ga.row(r).iter().zip(yr).map(|(g, y)| g * y).sum();
                    ga.row_mut(r).iter_mut().zip(yr).for_each(|(v, y)| *v = (*v - y * dot) / norm);
                }
                out.push((a.index, ga));
            }
            Op::LayerNorm(a, inv_std) => {
                let y = &node.value;
                let c = y.cols() as f64;
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    let yr = y.row(r);
                    let gr = ga.row(r);
                    let mean_g = gr.iter().sum::<f64>() / c;
                    let mean_gy = gr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / c;
                    let s = inv_std[r];
                    ga.row_mut(r)
                        .iter_mut()
                        .zip(yr)
                        .for_each(|(v, y)| *v = s * (*v - mean_g - y * mean_gy));
                }
                out.push((a.index, ga));
            }
            Op::PairNorm { x, scale, rms } => {
                let n = node.value.rows() as f64;
                if *rms == 0.0 {
                    out.push((x.index, Matrix::zeros(g.rows(), g.cols())));
                } else {
                    // y = scale·c/rms with c the centered input
                    let y = &node.value;
                    let gy: f64 = g.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
                    let mut gc = g.clone();
                    gc.as_mut_slice()
                        .iter_mut()
                        .zip(y.as_slice())
                        .for_each(|(v, yv)| *v = (scale / rms) * (*v - yv * gy / (n * scale * scale)));
                    let means = gc.col_means();
                    for r in 0..gc.rows() {
                        gc.row_mut(r).iter_mut().zip(&means).for_each(|(v, m)| *v -= m);
                    }
                    out.push((x.index, gc));
                }
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                out.push((a.index, Matrix::filled(r, c, g.get(0, 0))));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels,
                mask,
            } => {
                let (r, c) = val(*logits).shape();
                let w = g.get(0, 0) / mask.len() as f64;
                let mut gz = Matrix::zeros(r, c);
                for (i, &row) in mask.iter().enumerate() {
                    let dst = gz.row_mut(row);
                    dst.iter_mut().zip(probs.row(i)).for_each(|(v, p)| *v += w * p);
                    dst[labels[row]] -= w;
                }
                out.push((logits.index, gz));
            }
        }
        for (index, grad) in out {
            self.accumulate(index, grad);
        }
        Ok(())
    }
}

fn l2(row: &[f64]) -> f64 {
    let scale = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * row.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for row in g.row_iter() {
        out.row_mut(0).iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    out
}
