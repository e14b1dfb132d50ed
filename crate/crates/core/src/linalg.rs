//! Dense symmetric eigensolver.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Eigenvalues in ascending order with matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

/// Householder tridiagonalization followed by implicit-shift QR sweeps.
pub fn symmetric_eigen(m: &Array2<f64>) -> Result<SymmetricSpectrum> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::Shape(format!("eigensolver input is {:?}", m.dim())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::try_new(dm, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, c)| eig.eigenvectors[(i, order[c])]);
    Ok(SymmetricSpectrum { values, vectors })
}

/// Dense `I − Â`.
pub fn normalized_laplacian_dense(a_hat: &CsrMatrix) -> Array2<f64> {
    let mut l = a_hat.to_dense().mapv(|v| -v);
    for i in 0..l.nrows() {
        l[[i, i]] += 1.0;
    }
    l
}
