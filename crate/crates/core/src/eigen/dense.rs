use nalgebra::{DMatrix, SymmetricEigen};

use super::{Method, Spectrum};
use crate::error::{Error, Result};

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub fn dense_symmetric(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to the dense eigensolver".into()));
    }
    let n = m.nrows();
    // Symmetrize against round-off in the caller's assembly.
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((values, eig.eigenvectors.select_columns(&idx)))
}

/// Smallest `k` pairs of `(H, diag(mass))` through `A^{-1/2} H A^{-1/2}`.
pub fn dense_generalized(h: &DMatrix<f64>, mass: &[f64], k: usize) -> Result<Spectrum> {
    let n = h.nrows();
    let isq: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut b = h.clone();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] *= isq[i] * isq[j];
        }
    }
    let (values, y) = dense_symmetric(b)?;
    let mut psi = y.columns(0, k).into_owned();
    for i in 0..n {
        psi.row_mut(i).scale_mut(isq[i]);
    }
    let mut s = Spectrum::new(values[..k].to_vec(), psi, mass.to_vec())?;
    s.method = Method::Dense;
    Ok(s)
}
