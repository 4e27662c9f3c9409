//! Compressed sparse row matrices and the symmetric degree normalization
//! used by graph convolution.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` entries. Entries must be
    /// unique per coordinate; they may arrive in any order.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for &(r, c, v) in &entries {
            assert!(r < n_rows && c < n_cols, "entry ({r}, {c}) out of bounds");
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values stored in `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[row]..self.indptr[row + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.row(row).find(|&(c, _)| c == col).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }

    /// `self · rhs`
    pub fn mul_dense(&self, rhs: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.n_cols, rhs.nrows(), "sparse matmul inner dimension");
        let mut out = Array2::zeros((self.n_rows, rhs.ncols()));
        for r in 0..self.n_rows {
            let mut acc = out.row_mut(r);
            for (c, v) in self.row(r) {
                acc.scaled_add(v, &rhs.row(c));
            }
        }
        out
    }

    /// `selfᵀ · rhs`
    pub fn transpose_mul_dense(&self, rhs: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.n_rows, rhs.nrows(), "sparse transposed matmul inner dimension");
        let mut out = Array2::zeros((self.n_cols, rhs.ncols()));
        for r in 0..self.n_rows {
            let src = rhs.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &src);
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }
}

/// `D̃^{-1/2} Ã D̃^{-1/2}` where `Ã` is the binary, symmetrized adjacency of
/// `edges` with every diagonal entry set. Parallel edges collapse to one.
pub fn normalized_adjacency(edges: &[(usize, usize)], n: usize) -> CsrMatrix {
    let mut pattern: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for &(a, b) in edges {
        assert!(a < n && b < n, "edge ({a}, {b}) references an entity >= {n}");
        pattern.insert((a, b));
        pattern.insert((b, a));
    }
    let mut degree = vec![0.0f64; n];
    for &(r, _) in &pattern {
        degree[r] += 1.0;
    }
    let entries = pattern
        .into_iter()
        .map(|(r, c)| (r, c, 1.0 / (degree[r] * degree[c]).sqrt()))
        .collect();
    CsrMatrix::from_triplets(n, n, entries)
}
