use super::Matrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix used for neighbourhood aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, weight)` triples; entries are grouped by row
    /// in their given order and duplicates are kept (they sum).
    pub fn from_triples(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in entries {
            if r >= rows || c >= cols {
                return Err(Error::shape(format!(
                    "sparse entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut indices = vec![0; entries.len()];
        let mut weights = vec![0.0; entries.len()];
        for &(r, c, w) in entries {
            let at = cursor[r];
            indices[at] = c;
            weights[at] = w;
            cursor[r] += 1;
        }
        Ok(SparseMatrix {
            rows,
            cols,
            offsets: counts,
            indices,
            weights,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// `self * x`.
    pub fn mul_dense(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.cols {
            return Err(Error::shape(format!(
                "sparse {}x{} times dense {:?}",
                self.rows,
                self.cols,
                x.shape()
            )));
        }
        let mut out = Matrix::zeros(self.rows, x.cols());
        for r in 0..self.rows {
            for (c, w) in self.row_entries(r) {
                for (o, &v) in out.row_mut(r).iter_mut().zip(x.row(c)) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * g`.
    pub fn mul_dense_transposed(&self, g: &Matrix) -> Result<Matrix> {
        if g.rows() != self.rows {
            return Err(Error::shape(format!(
                "sparse {}x{} transposed times dense {:?}",
                self.rows,
                self.cols,
                g.shape()
            )));
        }
        let mut out = Matrix::zeros(self.cols, g.cols());
        for r in 0..self.rows {
            for (c, w) in self.row_entries(r) {
                for (o, &v) in out.row_mut(c).iter_mut().zip(g.row(r)) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }
}
