//! Dense symmetric eigendecomposition, used as the oracle for every
//! spectral check.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::sparse::SymmetricOperator;

pub const DEFAULT_DENSE_CAP: usize = 4096;

#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` belongs to `values[i]`.
    pub vectors: Option<DMatrix<f64>>,
}

impl DenseSpectrum {
    pub fn ground_energy(&self) -> f64 {
        self.values[0]
    }

    pub fn gap(&self) -> f64 {
        if self.values.len() < 2 {
            f64::INFINITY
        } else {
            self.values[1] - self.values[0]
        }
    }

    /// Ground vector with the sign fixed so the largest-magnitude
    /// coordinate is positive.
    pub fn ground_vector(&self) -> Option<Vec<f64>> {
        let q = self.vectors.as_ref()?;
        let mut v: Vec<f64> = q.column(0).iter().copied().collect();
        fix_sign(&mut v);
        Some(v)
    }
}

pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn dense_spectrum_of(m: &DMatrix<f64>, cap: usize, with_vectors: bool) -> Result<DenseSpectrum> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(n, m.ncols()));
    }
    if n > cap {
        return Err(Error::DimensionCap { dim: n as u128, cap });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if with_vectors {
        let eig = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut q = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            q.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(DenseSpectrum {
            values,
            vectors: Some(q),
        })
    } else {
        let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        Ok(DenseSpectrum {
            values,
            vectors: None,
        })
    }
}

/// All eigenvalues in ascending order, optionally with eigenvectors.
pub fn dense_spectrum<H: SymmetricOperator + ?Sized>(
    h: &H,
    cap: usize,
    with_vectors: bool,
) -> Result<DenseSpectrum> {
    if h.dim() > cap {
        return Err(Error::DimensionCap {
            dim: h.dim() as u128,
            cap,
        });
    }
    dense_spectrum_of(&h.to_dense(), cap, with_vectors)
}
