//! Quantities derived from a [`Spectrum`]: truncated diffusion and heat
//! kernels, HKS/WKS descriptors, nodal domains and the spectral residual bound.

mod descriptors;
mod nodal;
pub mod robustness;

pub use descriptors::{hks, wks, wks_default_schedule, DescriptorField, DescriptorKind, WKS_MIN_EIGENVALUE};
pub use nodal::{nodal_domains, nodal_domains_graph, NodalDecomposition, NODAL_ZERO_BAND};

use nalgebra::DMatrix;

use crate::eigen::Spectrum;
use crate::error::{invalid, Error, Result};
use crate::fem::Pencil;

/// Heat diffusion in the truncated basis: `u(t) = Ψ e^{-Et} ΨᵀA u₀`.
/// At `t = 0` this is the A-projection of `u₀` onto the basis.
pub fn diffuse(spectrum: &Spectrum, u0: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return invalid(format!("diffusion time must be non-negative, got {t}"));
    }
    if u0.len() != spectrum.n() {
        return Err(Error::Dimension { expected: spectrum.n(), got: u0.len() });
    }
    let coeffs: Vec<f64> = spectrum
        .project(u0)
        .iter()
        .zip(spectrum.values())
        .map(|(c, e)| c * (-e * t).exp())
        .collect();
    Ok(spectrum.synthesize(&coeffs))
}

/// Row `x` of the truncated kernel `K(x, y, t) = Σᵢ e^{-Eᵢt} ψᵢ(x) ψᵢ(y)`.
pub fn heat_kernel_row(spectrum: &Spectrum, x: usize, t: f64) -> Result<Vec<f64>> {
    if x >= spectrum.n() {
        return invalid(format!("vertex {x} out of range for {} vertices", spectrum.n()));
    }
    if !(t >= 0.0) {
        return invalid(format!("diffusion time must be non-negative, got {t}"));
    }
    let coeffs: Vec<f64> = (0..spectrum.k())
        .map(|i| (-spectrum.values()[i] * t).exp() * spectrum.vector(i)[x])
        .collect();
    Ok(spectrum.synthesize(&coeffs))
}

/// Largest mesh for which [`heat_kernel_dense`] materializes the `n × n` kernel.
pub const DENSE_KERNEL_LIMIT: usize = 2000;

pub fn heat_kernel_dense(spectrum: &Spectrum, t: f64) -> Result<DMatrix<f64>> {
    if spectrum.n() > DENSE_KERNEL_LIMIT {
        return invalid(format!("dense kernel limited to {DENSE_KERNEL_LIMIT} vertices"));
    }
    if !(t >= 0.0) {
        return invalid(format!("diffusion time must be non-negative, got {t}"));
    }
    let psi = spectrum.vectors();
    let mut scaled = psi.clone();
    for (i, e) in spectrum.values().iter().enumerate() {
        scaled.column_mut(i).scale_mut((-e * t).exp());
    }
    Ok(scaled * psi.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ResidualBound {
    /// `‖f - Σ_{i≤n} ⟨f, ψᵢ⟩_A ψᵢ‖²_A`.
    pub residual2: f64,
    /// `fᵀHf / E_{n+1}`; `None` when `E_{n+1}` is numerically zero.
    pub bound: Option<f64>,
    pub holds: bool,
}

/// Truncation residual against the energy bound `fᵀ(W + A·diag(μV))f / E_{n+1}`,
/// valid for non-negative potentials. `n_trunc` basis functions are kept, so
/// the spectrum must hold at least `n_trunc + 1` pairs.
pub fn residual_bound_check(spectrum: &Spectrum, pencil: &Pencil, f: &[f64], n_trunc: usize) -> Result<ResidualBound> {
    let n = spectrum.n();
    if f.len() != n {
        return Err(Error::Dimension { expected: n, got: f.len() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("residual check input".into()));
    }
    if n_trunc >= spectrum.k() {
        return invalid(format!("need {} eigenpairs for truncation at {n_trunc}", n_trunc + 1));
    }
    let mass = spectrum.mass();
    let mut r = f.to_vec();
    for i in 0..n_trunc {
        let psi = spectrum.vector(i);
        let c = crate::eigen::a_dot(psi, f, mass);
        for (ri, p) in r.iter_mut().zip(psi) {
            *ri -= c * p;
        }
    }
    let residual2 = crate::eigen::a_dot(&r, &r, mass);
    let e_next = spectrum.values()[n_trunc];
    let energy = pencil.h.quad_form(f);
    let floor = 1e-12 * spectrum.values().iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let bound = (e_next > floor).then(|| energy / e_next);
    let holds = bound.is_some_and(|b| residual2 <= b * (1.0 + 1e-10) + 1e-14);
    Ok(ResidualBound { residual2, bound, holds })
}
