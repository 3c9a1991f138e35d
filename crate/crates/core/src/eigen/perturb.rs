use nalgebra::DMatrix;

use super::Spectrum;
use crate::error::{Error, Result};
use crate::fem::{DiagOperator, SparseSymOperator};

/// Pairs with `|Eᵢ - Eⱼ| < DEGENERACY_GUARD·(1 + |Eᵢ|)` are skipped.
pub const DEGENERACY_GUARD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Prediction {
    pub vectors: DMatrix<f64>,
    /// `(i, j)` pairs whose term was dropped as (near-)degenerate.
    pub skipped: Vec<(usize, usize)>,
}

/// First-order prediction of the eigenvectors of `(H + δH, A + δA)` from the
/// `k` computed pairs of `(H, A)`:
///
/// `ψ̃ᵢ = ψᵢ(1 - ψᵢᵀδAψᵢ/2) + Σ_{j≠i} ψⱼᵀ(δH - EᵢδA)ψᵢ / (Eᵢ - Eⱼ) · ψⱼ`.
///
/// `delta_h` is the full change of the Hamiltonian matrix (stiffness and
/// potential parts), `delta_a` the signed change of the lumped mass.
pub fn predict_perturbed(spectrum: &Spectrum, delta_h: &SparseSymOperator, delta_a: &DiagOperator) -> Result<Prediction> {
    let n = spectrum.n();
    if delta_h.dim() != n {
        return Err(Error::Dimension { expected: n, got: delta_h.dim() });
    }
    if delta_a.dim() != n {
        return Err(Error::Dimension { expected: n, got: delta_a.dim() });
    }
    let psi = spectrum.vectors();
    let e = spectrum.values();
    let k = spectrum.k();
    // ΨᵀδHΨ and ΨᵀδAΨ.
    let dh = psi.transpose() * delta_h.mul_mat(psi);
    let mut da_psi = psi.clone();
    for (i, d) in delta_a.values.iter().enumerate() {
        da_psi.row_mut(i).scale_mut(*d);
    }
    let da = psi.transpose() * da_psi;

    let mut out = psi.clone();
    let mut skipped = Vec::new();
    for i in 0..k {
        let mut col = psi.column(i) * (1.0 - 0.5 * da[(i, i)]);
        for j in 0..k {
            if j == i {
                continue;
            }
            let gap = e[i] - e[j];
            if gap.abs() < DEGENERACY_GUARD * (1.0 + e[i].abs()) {
                skipped.push((i, j));
                continue;
            }
            let c = (dh[(j, i)] - e[i] * da[(j, i)]) / gap;
            col += psi.column(j) * c;
        }
        out.column_mut(i).copy_from(&col);
    }
    Ok(Prediction { vectors: out, skipped })
}
