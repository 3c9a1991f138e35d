//! Generalized symmetric eigenproblems `H ψ = E A ψ` with diagonal `A`.
//!
//! Small problems are solved densely (`A^{-1/2} H A^{-1/2}` plus a full
//! symmetric eigendecomposition). Larger ones use shift-invert block
//! Lanczos on `(H + σA)^{-1} A` with an envelope Cholesky factor; low-rank
//! updated pencils `(H + UUᵀ, A)` apply the inverse through the Woodbury
//! identity so the sparse factor is reused.

mod dense;
pub mod factor;
mod io;
mod lanczos;
mod perturb;
mod woodbury;

pub use dense::{dense_generalized, dense_symmetric};
pub use io::{read_spectrum, write_spectrum, SpectrumHeader};
pub use perturb::{predict_perturbed, Prediction, DEGENERACY_GUARD};
pub use woodbury::WoodburySolver;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{DiagOperator, Pencil, PotentialField, SparseSymOperator};

/// A-orthonormal eigenpairs in ascending eigenvalue order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    mass: Vec<f64>,
    pub method: Method,
    pub tol: f64,
}

impl Spectrum {
    /// Wraps precomputed eigenpairs, sorting them and applying the sign rule.
    pub fn new(values: Vec<f64>, vectors: DMatrix<f64>, mass: Vec<f64>) -> Result<Self> {
        if vectors.ncols() != values.len() {
            return Err(Error::Dimension { expected: values.len(), got: vectors.ncols() });
        }
        if vectors.nrows() != mass.len() {
            return Err(Error::Dimension { expected: mass.len(), got: vectors.nrows() });
        }
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let values: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let mut vecs = vectors.select_columns(&idx);
        for mut c in vecs.column_iter_mut() {
            normalize_sign(c.as_mut_slice());
        }
        Ok(Self { values, vectors: vecs, mass, method: Method::Dense, tol: 0.0 })
    }

    /// Keeps the given column order (for bases that are not eigenpairs of a
    /// single pencil); only the sign rule is applied.
    pub fn from_columns(values: Vec<f64>, mut vectors: DMatrix<f64>, mass: Vec<f64>) -> Result<Self> {
        if vectors.ncols() != values.len() {
            return Err(Error::Dimension { expected: values.len(), got: vectors.ncols() });
        }
        if vectors.nrows() != mass.len() {
            return Err(Error::Dimension { expected: mass.len(), got: vectors.nrows() });
        }
        for mut c in vectors.column_iter_mut() {
            normalize_sign(c.as_mut_slice());
        }
        Ok(Self { values, vectors, mass, method: Method::Dense, tol: 0.0 })
    }

    /// Keeps order and signs exactly as given.
    pub fn from_parts(values: Vec<f64>, vectors: DMatrix<f64>, mass: Vec<f64>) -> Result<Self> {
        if vectors.ncols() != values.len() || vectors.nrows() != mass.len() {
            return Err(Error::Dimension { expected: values.len(), got: vectors.ncols() });
        }
        Ok(Self { values, vectors, mass, method: Method::Dense, tol: 0.0 })
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.vectors.as_slice()[i * n..(i + 1) * n]
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// First `k` pairs.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.k() {
            return Err(Error::InvalidArgument(format!("cannot truncate {} pairs to {k}", self.k())));
        }
        Ok(Self {
            values: self.values[..k].to_vec(),
            vectors: self.vectors.columns(0, k).into_owned(),
            mass: self.mass.clone(),
            method: self.method,
            tol: self.tol,
        })
    }

    /// `max |ΨᵀAΨ - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = gram(&self.vectors, &self.mass);
        let mut e: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let t = if i == j { 1.0 } else { 0.0 };
                e = e.max((g[(i, j)] - t).abs());
            }
        }
        e
    }

    /// Per-column `‖Hψ - EAψ‖₂ / (‖H‖∞ ‖ψ‖₂)`.
    pub fn relative_residuals(&self, h: &SparseSymOperator) -> Vec<f64> {
        let hn = h.norm_inf().max(f64::MIN_POSITIVE);
        let hv = h.mul_mat(&self.vectors);
        (0..self.k())
            .map(|i| {
                let v = self.vector(i);
                let r: f64 = (0..self.n())
                    .map(|x| (hv[(x, i)] - self.values[i] * self.mass[x] * v[x]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                r / (hn * nv)
            })
            .collect()
    }

    /// Coefficients `ΨᵀA f`.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        (0..self.k()).map(|i| a_dot(self.vector(i), f, &self.mass)).collect()
    }

    /// `Ψ c`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (i, c) in coeffs.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.vector(i)) {
                *o += c * v;
            }
        }
        out
    }
}

pub(crate) fn a_dot(f: &[f64], g: &[f64], mass: &[f64]) -> f64 {
    f.iter().zip(g).zip(mass).map(|((a, b), m)| a * b * m).sum()
}

/// `XᵀAX`.
pub fn gram(x: &DMatrix<f64>, mass: &[f64]) -> DMatrix<f64> {
    let mut ax = x.clone();
    for (i, m) in mass.iter().enumerate() {
        ax.row_mut(i).scale_mut(*m);
    }
    x.transpose() * ax
}

/// Largest principal angle (radians) between the spans of two A-orthonormal
/// column sets of equal width.
pub fn max_principal_angle(x: &DMatrix<f64>, y: &DMatrix<f64>, mass: &[f64]) -> Result<f64> {
    if x.shape() != y.shape() || x.nrows() != mass.len() {
        return Err(Error::Dimension { expected: x.ncols(), got: y.ncols() });
    }
    let mut ay = y.clone();
    for (i, m) in mass.iter().enumerate() {
        ay.row_mut(i).scale_mut(*m);
    }
    // sin θ_max = ‖A^{1/2}(X − Y YᵀA X)‖₂.
    let mut r = x - y * (ay.transpose() * x);
    for (i, m) in mass.iter().enumerate() {
        r.row_mut(i).scale_mut(m.sqrt());
    }
    let s = r.singular_values().iter().copied().fold(0.0f64, f64::max);
    Ok(s.min(1.0).asin())
}

/// Flips `v` so that its entry of largest magnitude (first one on ties) is positive.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

pub const DEFAULT_DENSE_THRESHOLD: usize = 600;
pub const DEFAULT_SEED: u64 = 0x5EED_1DEA;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative residual tolerance `‖Hψ - EAψ‖ ≤ tol·‖H‖·‖ψ‖`.
    pub tol: f64,
    pub dense_threshold: usize,
    pub method: MethodChoice,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            method: MethodChoice::Auto,
            max_restarts: 300,
            seed: DEFAULT_SEED,
        }
    }
}

impl SolveOptions {
    pub fn dense() -> Self {
        Self { method: MethodChoice::Dense, ..Self::default() }
    }

    pub fn lanczos() -> Self {
        Self { method: MethodChoice::Lanczos, ..Self::default() }
    }

    fn use_dense(&self, n: usize) -> bool {
        match self.method {
            MethodChoice::Dense => true,
            MethodChoice::Lanczos => false,
            MethodChoice::Auto => n <= self.dense_threshold,
        }
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("requested {k} eigenpairs of a {n}-dimensional pencil")));
    }
    Ok(())
}

fn check_mass(mass: &DiagOperator, n: usize) -> Result<()> {
    if mass.dim() != n {
        return Err(Error::Dimension { expected: n, got: mass.dim() });
    }
    if let Some(i) = mass.values.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::InvalidArgument(format!("mass entry {i} is not positive")));
    }
    Ok(())
}

/// The `k` algebraically smallest eigenpairs of `(H, A)`.
pub fn solve_generalized(pencil: &Pencil, k: usize, opts: &SolveOptions) -> Result<Spectrum> {
    let n = pencil.dim();
    check_k(n, k)?;
    check_mass(&pencil.mass, n)?;
    if opts.use_dense(n) {
        let h = pencil.h.to_dense();
        let mut s = dense_generalized(&h, &pencil.mass.values, k)?;
        s.tol = opts.tol;
        return Ok(s);
    }
    let solver = WoodburySolver::new(&pencil.h, &pencil.mass.values, DMatrix::zeros(n, 0))?;
    lanczos::shift_invert(&pencil.h, &pencil.mass.values, &solver, k, opts)
}

/// The `k` smallest eigenpairs of `(H + UUᵀ, A)`.
pub fn solve_lowrank_updated(pencil: &Pencil, u: &DMatrix<f64>, k: usize, opts: &SolveOptions) -> Result<Spectrum> {
    let n = pencil.dim();
    check_k(n, k)?;
    check_mass(&pencil.mass, n)?;
    if u.nrows() != n {
        return Err(Error::Dimension { expected: n, got: u.nrows() });
    }
    if opts.use_dense(n) {
        let h = pencil.h.to_dense() + u * u.transpose();
        let mut s = dense_generalized(&h, &pencil.mass.values, k)?;
        s.tol = opts.tol;
        return Ok(s);
    }
    let solver = WoodburySolver::new(&pencil.h, &pencil.mass.values, u.clone())?;
    lanczos::shift_invert(&pencil.h, &pencil.mass.values, &solver, k, opts)
}

/// Per-index check of `λᵢ + min V ≤ Eᵢ ≤ λᵢ + max V`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub lower_ok: Vec<bool>,
    pub upper_ok: Vec<bool>,
    /// Largest violation relative to `1 + |Eᵢ|` (≤ 0 when every bound holds strictly).
    pub worst_violation: f64,
    pub pass: bool,
}

pub fn check_bounds(lbo: &Spectrum, ham: &Spectrum, potential: &PotentialField, slack: f64) -> Result<BoundsReport> {
    if lbo.k() != ham.k() {
        return Err(Error::Dimension { expected: lbo.k(), got: ham.k() });
    }
    let v = potential.scaled();
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut worst = f64::NEG_INFINITY;
    let mut lower_ok = Vec::with_capacity(lbo.k());
    let mut upper_ok = Vec::with_capacity(lbo.k());
    for (l, e) in lbo.values().iter().zip(ham.values()) {
        let scale = 1.0 + e.abs();
        let lo = (l + vmin - e) / scale;
        let hi = (e - l - vmax) / scale;
        worst = worst.max(lo).max(hi);
        lower_ok.push(lo <= slack);
        upper_ok.push(hi <= slack);
    }
    let pass = lower_ok.iter().chain(&upper_ok).all(|&b| b);
    Ok(BoundsReport { lower_ok, upper_ok, worst_violation: worst, pass })
}
