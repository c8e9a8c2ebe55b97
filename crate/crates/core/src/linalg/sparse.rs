use super::Matrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix, used for graph operators and bag-of-words
/// features. Column indices within a row are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::invalid(format!("triplet ({r}, {c}) outside {rows}x{cols}")));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("non-empty after first push") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut triplets = Vec::new();
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), triplets).expect("indices in range")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            triplets.extend(self.row(r).map(|(c, v)| (c, r, v)));
        }
        Self::from_triplets(self.cols, self.rows, triplets).expect("indices in range")
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m.set(r, c, v);
            }
        }
        m
    }

    /// Scales every stored entry of row `r` by `f(r)`.
    pub fn scale_rows(&mut self, f: impl Fn(usize) -> f64) {
        for r in 0..self.rows {
            let s = f(r);
            for v in &mut self.values[self.indptr[r]..self.indptr[r + 1]] {
                *v *= s;
            }
        }
    }

    /// Scales every stored entry in column `c` by `f(c)`.
    pub fn scale_cols(&mut self, f: impl Fn(usize) -> f64) {
        for (c, v) in self.indices.iter().zip(self.values.iter_mut()) {
            *v *= f(*c);
        }
    }

    /// `self · dense`.
    pub fn matmul_dense(&self, dense: &Matrix) -> Result<Matrix> {
        if self.cols != dense.rows() {
            return Err(Error::ShapeMismatch {
                op: "csr_matmul",
                left: (self.rows, self.cols),
                right: dense.shape(),
            });
        }
        let k = dense.cols();
        let mut out = Matrix::zeros(self.rows, k);
        for r in 0..self.rows {
            let span = self.indptr[r]..self.indptr[r + 1];
            let acc = out.row_mut(r);
            for (&c, &v) in self.indices[span.clone()].iter().zip(&self.values[span]) {
                for (a, &b) in acc.iter_mut().zip(dense.row(c)) {
                    *a += v * b;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 3.0), (1, 0, 5.0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        let d = m.to_dense();
        assert_eq!(d.as_slice(), &[0.0, 2.0, 0.0, 5.0, 0.0, 4.0]);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = Matrix::from_rows(&[&[0.0, 1.5, 0.0], &[2.0, 0.0, -1.0]]).unwrap();
        let b = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let sparse = CsrMatrix::from_dense(&a);
        assert_eq!(sparse.matmul_dense(&b).unwrap(), a.matmul(&b).unwrap());
        assert_eq!(sparse.transpose().to_dense(), a.transpose());
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }
}
