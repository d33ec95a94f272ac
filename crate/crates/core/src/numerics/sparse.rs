//! Compressed sparse row matrices and adjacency structure.

use super::matrix::Matrix;

/// CSR matrix with fixed (non-differentiable) values.
///
/// Hosts the normalized adjacency operators used by the GNN layers.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from raw CSR parts. Panics on inconsistent parts; column indices
    /// must be sorted ascending within each row.
    pub fn new(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(offsets.len(), rows + 1);
        assert_eq!(*offsets.last().unwrap_or(&0), col_indices.len());
        assert_eq!(col_indices.len(), values.len());
        for r in 0..rows {
            let row = &col_indices[offsets[r]..offsets[r + 1]];
            assert!(row.windows(2).all(|w| w[0] < w[1]), "unsorted row {r}");
            assert!(row.iter().all(|&c| c < cols), "column out of range");
        }
        Self {
            rows,
            cols,
            offsets,
            col_indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Entries of one row as (column, value) pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[r]..self.offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// self (r x c) * dense (c x n).
    pub fn mul_dense(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.cols, x.rows(), "spmm inner dim mismatch");
        let n = x.cols();
        let mut out = Matrix::zeros(self.rows, n);
        for r in 0..self.rows {
            for k in self.offsets[r]..self.offsets[r + 1] {
                let col = self.col_indices[k];
                let v = self.values[k];
                let src = x.row(col);
                let dst = out.row_mut(r);
                for c in 0..n {
                    dst[c] += v * src[c];
                }
            }
        }
        out
    }

    /// self^T (c x r) * dense (r x n). Used by the backward pass of spmm.
    pub fn transpose_mul_dense(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.rows, x.rows(), "spmm^T inner dim mismatch");
        let n = x.cols();
        let mut out = Matrix::zeros(self.cols, n);
        for r in 0..self.rows {
            let src = x.row(r);
            for k in self.offsets[r]..self.offsets[r + 1] {
                let col = self.col_indices[k];
                let v = self.values[k];
                let dst = out.row_mut(col);
                for c in 0..n {
                    dst[c] += v * src[c];
                }
            }
        }
        out
    }
}

/// Square CSR adjacency structure without values.
///
/// Each row lists a node's neighborhood; the GAT layer attaches learned
/// per-edge weights to this structure. Entry order within a row is the
/// canonical sorted order, and `offsets` delimit per-row segments.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrStructure {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
}

impl CsrStructure {
    pub fn new(n: usize, offsets: Vec<usize>, cols: Vec<usize>) -> Self {
        assert_eq!(offsets.len(), n + 1);
        assert_eq!(*offsets.last().unwrap_or(&0), cols.len());
        for r in 0..n {
            let row = &cols[offsets[r]..offsets[r + 1]];
            assert!(row.windows(2).all(|w| w[0] < w[1]), "unsorted row {r}");
            assert!(row.iter().all(|&c| c < n), "column out of range");
        }
        Self { n, offsets, cols }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Row index of every entry, expanded to entry order (length nnz).
    pub fn expanded_rows(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            rows.extend(std::iter::repeat(r).take(self.offsets[r + 1] - self.offsets[r]));
        }
        rows
    }
}
