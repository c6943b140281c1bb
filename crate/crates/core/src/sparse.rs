//! Compressed sparse row storage for symmetric operators.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Real symmetric operator applied by matrix-vector products.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn to_dense(&self) -> DMatrix<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self[(i, j)] * x[j];
            }
            *yi = acc;
        });
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Full (both triangles) CSR matrix. Each row is reduced in column
/// order, so products do not depend on the worker count.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Expand lower-triangle triplets (sorted by row, then column) into
    /// full symmetric CSR.
    pub fn from_lower_triplets(
        n: usize,
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
    ) -> Result<Self> {
        if rows.len() != cols.len() || rows.len() != vals.len() {
            return Err(Error::InvalidArgument("triplet arrays differ in length".into()));
        }
        let mut counts = vec![0usize; n];
        for (&r, &c) in rows.iter().zip(cols) {
            if r >= n || c >= n {
                return Err(Error::InvalidArgument(format!("triplet ({r}, {c}) outside dim {n}")));
            }
            if c > r {
                return Err(Error::InvalidArgument(format!("triplet ({r}, {c}) above diagonal")));
            }
            counts[r] += 1;
            if r != c {
                counts[c] += 1;
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut fill = row_ptr[..n].to_vec();
        // Upper-triangle entries of row c come from lower entries (r, c)
        // with r > c; those have to land after row c's own lower entries,
        // so place lower entries first, then the transposed ones.
        for ((&r, &c), &v) in rows.iter().zip(cols).zip(vals) {
            col_idx[fill[r]] = c;
            values[fill[r]] = v;
            fill[r] += 1;
        }
        for ((&r, &c), &v) in rows.iter().zip(cols).zip(vals) {
            if r != c {
                col_idx[fill[c]] = r;
                values[fill[c]] = v;
                fill[c] += 1;
            }
        }
        let mut m = CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        };
        m.sort_rows();
        Ok(m)
    }

    fn sort_rows(&mut self) {
        for i in 0..self.n {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let cols = &self.col_idx[a..b];
            if cols.windows(2).all(|w| w[0] < w[1]) {
                continue;
            }
            let mut pairs: Vec<(usize, f64)> = cols
                .iter()
                .copied()
                .zip(self.values[a..b].iter().copied())
                .collect();
            pairs.sort_by_key(|p| p.0);
            for (k, (c, v)) in pairs.into_iter().enumerate() {
                self.col_idx[a + k] = c;
                self.values[a + k] = v;
            }
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    /// Largest absolute row sum; an upper bound on the operator norm.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        const CHUNK: usize = 1024;
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, ys)| {
            let base = chunk * CHUNK;
            for (k, yi) in ys.iter_mut().enumerate() {
                let i = base + k;
                let mut acc = 0.0;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[p] * x[self.col_idx[p]];
                }
                *yi = acc;
            }
        });
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_triplets_expand_symmetrically() {
        // [[2, -1, 0], [-1, 3, -4], [0, -4, 5]]
        let rows = [0, 1, 1, 2, 2];
        let cols = [0, 0, 1, 1, 2];
        let vals = [2.0, -1.0, 3.0, -4.0, 5.0];
        let m = CsrMatrix::from_lower_triplets(3, &rows, &cols, &vals).unwrap();
        let d = m.to_dense();
        assert_eq!(d, d.transpose());
        assert_eq!(d[(1, 2)], -4.0);
        let mut y = vec![0.0; 3];
        m.apply(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![1.0, -2.0, 1.0]);
        assert_eq!(m.inf_norm(), 9.0);
    }

    #[test]
    fn rejects_upper_entries() {
        assert!(CsrMatrix::from_lower_triplets(2, &[0], &[1], &[1.0]).is_err());
    }
}
