//! Potential optimization: choose `V` so that the first `k` eigenvectors of
//! `(W + M·diag(μV), M)` represent a data table `X` as well as possible.
//!
//! `M` is the lumped mass in geometric mode and the identity in plain mode,
//! so the loss is measured in the matching norm. Eigenvector derivatives come
//! from first-order perturbation theory over the leading `m` eigenpairs, with
//! the inverse gaps stabilized by `ε`.

mod lbfgs;

pub use lbfgs::{lbfgs, LbfgsOptions, LbfgsReport, StopReason};

use std::io::{self, Write};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::eigen::{dense_symmetric, solve_generalized, SolveOptions, Spectrum};
use crate::error::{invalid, Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, DiagOperator, MassScheme, PotentialField, SparseSymOperator};
use crate::mesh::TriMesh;

pub const DEFAULT_SPECTRAL_DIM: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    /// `V ∈ ℝⁿ`, negative values allowed.
    #[default]
    Free,
    /// `V = v²`.
    Squared,
}

#[derive(Debug, Clone)]
pub struct OptimizationProblem {
    /// `n × d` data table.
    pub data: DMatrix<f64>,
    pub k: usize,
    /// Number of eigenpairs used for the gradient; defaults to `min(n, 150)`.
    pub m: Option<usize>,
    /// Gap stabilizer; defaults to `1e-6·(E_k − E_1)/k` of the initial spectrum.
    pub epsilon: Option<f64>,
    pub parameterization: Parameterization,
    /// Mass-weighted norm and mass matrix when set, identity otherwise.
    pub geometric: bool,
    pub mu: f64,
    /// Largest per-vertex change of the first step; defaults to `0.1·E_k`.
    pub initial_step: Option<f64>,
    pub lbfgs: LbfgsOptions,
    pub solve: SolveOptions,
}

impl OptimizationProblem {
    pub fn new(data: DMatrix<f64>, k: usize) -> Self {
        Self {
            data,
            k,
            m: None,
            epsilon: None,
            parameterization: Parameterization::Free,
            geometric: true,
            mu: 1.0,
            initial_step: None,
            lbfgs: LbfgsOptions { max_iter: 100, ..Default::default() },
            solve: SolveOptions::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    fn spectral_dim(&self) -> usize {
        self.m.unwrap_or(self.n().min(DEFAULT_SPECTRAL_DIM))
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.data.nrows() != n {
            return Err(Error::Dimension { expected: n, got: self.data.nrows() });
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data table".into()));
        }
        let m = self.spectral_dim();
        if !(self.k >= 1 && self.k < m && m <= n) {
            return invalid(format!("need 1 ≤ k < m ≤ n, got k = {}, m = {m}, n = {n}", self.k));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return invalid(format!("stabilizer ε must be positive, got {e}"));
            }
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return invalid(format!("μ must be positive, got {}", self.mu));
        }
        Ok(())
    }

    fn lbfgs_options(&self, initial: &Spectrum) -> LbfgsOptions {
        let ek = initial.values()[self.k - 1].abs().max(initial.values()[self.k].abs());
        let step = self.initial_step.unwrap_or(0.1 * ek.max(1e-12));
        let step = match self.parameterization {
            Parameterization::Free => step / self.mu,
            Parameterization::Squared => (step / self.mu).sqrt(),
        };
        LbfgsOptions { initial_step: step, ..self.lbfgs }
    }

    fn epsilon_for(&self, initial: &Spectrum) -> f64 {
        self.epsilon.unwrap_or_else(|| {
            let v = initial.values();
            let e = 1e-6 * (v[self.k - 1] - v[0]) / self.k as f64;
            if e > 0.0 { e } else { 1e-12 }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationTrace {
    pub iterations: usize,
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub evaluations: usize,
    pub stop: StopReason,
    /// Set when an eigensolve failed mid-run.
    pub failure: Option<String>,
    pub epsilon: f64,
    pub m: usize,
    pub eigensolve_seconds: f64,
    #[serde(skip)]
    pub potential: PotentialField,
}

impl OptimizationTrace {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }

    /// `iter,loss,grad_norm` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iter,loss,grad_norm")?;
        for (i, (l, g)) in self.losses.iter().zip(&self.grad_norms).enumerate() {
            writeln!(w, "{i},{l:?},{g:?}")?;
        }
        Ok(())
    }
}

fn check_data(spectrum: &Spectrum, x: &DMatrix<f64>, k: usize) -> Result<()> {
    if x.nrows() != spectrum.n() {
        return Err(Error::Dimension { expected: spectrum.n(), got: x.nrows() });
    }
    if k > spectrum.k() {
        return invalid(format!("k = {k} exceeds the {} computed eigenpairs", spectrum.k()));
    }
    Ok(())
}

/// `ΨᵀMX` for the first `cols` eigenvectors.
fn coefficients(spectrum: &Spectrum, x: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    let mut ax = x.clone();
    for (r, m) in spectrum.mass().iter().enumerate() {
        ax.row_mut(r).scale_mut(*m);
    }
    spectrum.vectors().columns(0, cols).transpose() * ax
}

/// `‖X‖²_M − ‖Ψ_kᵀMX‖²`, the squared residual of projecting `X` onto the
/// first `k` eigenvectors in the spectrum's mass norm.
pub fn reconstruction_loss(spectrum: &Spectrum, x: &DMatrix<f64>, k: usize) -> Result<f64> {
    check_data(spectrum, x, k)?;
    let total: f64 = (0..x.nrows())
        .map(|r| spectrum.mass()[r] * x.row(r).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let p = coefficients(spectrum, x, k);
    Ok(total - p.norm_squared())
}

/// `1/((|Eᵢ − Eⱼ| + ε)·sign(Eᵢ − Eⱼ))`. Exact ties take the sign of `j − i`
/// so the matrix stays antisymmetric.
pub fn stabilized_inverse_gap(ei: f64, ej: f64, i: usize, j: usize, eps: f64) -> f64 {
    let d = ei - ej;
    let s = if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else if j > i {
        1.0
    } else {
        -1.0
    };
    s / (d.abs() + eps)
}

/// `B` with `B[(j, i)] = stabilized_inverse_gap(E_i, E_j)` and zero diagonal.
pub fn gap_matrix(values: &[f64], eps: f64) -> DMatrix<f64> {
    let m = values.len();
    DMatrix::from_fn(m, m, |j, i| if i == j { 0.0 } else { stabilized_inverse_gap(values[i], values[j], i, j, eps) })
}

/// Gradient of [`reconstruction_loss`] with respect to the diagonal
/// potential entries `μV_x`, using every pair in `spectrum` for the
/// eigenvector derivatives.
pub fn loss_gradient(spectrum: &Spectrum, x: &DMatrix<f64>, k: usize, eps: f64) -> Result<Vec<f64>> {
    check_data(spectrum, x, k)?;
    if !(eps > 0.0) {
        return invalid(format!("stabilizer ε must be positive, got {eps}"));
    }
    let m = spectrum.k();
    let p = coefficients(spectrum, x, m);
    // G[(j, i)] = ⟨ψⱼ, X⟩·⟨ψᵢ, X⟩ for i < k.
    let g = &p * p.rows(0, k).transpose();
    let b = gap_matrix(spectrum.values(), eps);
    let c = DMatrix::from_fn(m, k, |j, i| g[(j, i)] * b[(j, i)]);
    let z = spectrum.vectors() * c;
    let psi = spectrum.vectors();
    Ok((0..spectrum.n())
        .map(|v| {
            let s: f64 = (0..k).map(|i| psi[(v, i)] * z[(v, i)]).sum();
            -2.0 * spectrum.mass()[v] * s
        })
        .collect())
}

fn to_potential(p: &[f64], param: Parameterization) -> Vec<f64> {
    match param {
        Parameterization::Free => p.to_vec(),
        Parameterization::Squared => p.iter().map(|v| v * v).collect(),
    }
}

fn chain(grad_scaled: Vec<f64>, p: &[f64], param: Parameterization, mu: f64) -> Vec<f64> {
    match param {
        Parameterization::Free => grad_scaled.into_iter().map(|g| mu * g).collect(),
        Parameterization::Squared => grad_scaled.into_iter().zip(p).map(|(g, v)| 2.0 * v * mu * g).collect(),
    }
}

/// Starting parameters. A constant potential leaves the eigenvectors (and so
/// the loss) unchanged; the squared form starts from a small constant
/// because `v = 0` is a stationary point of `v²`.
fn start_point(n: usize, param: Parameterization, step: f64) -> Vec<f64> {
    match param {
        Parameterization::Free => vec![0.0; n],
        Parameterization::Squared => vec![step; n],
    }
}

fn run<F>(problem: &OptimizationProblem, initial: &Spectrum, mut spectrum_at: F) -> Result<(PotentialField, OptimizationTrace)>
where
    F: FnMut(&[f64]) -> Result<Spectrum>,
{
    let eps = problem.epsilon_for(initial);
    let opts = problem.lbfgs_options(initial);
    let (k, mu, param) = (problem.k, problem.mu, problem.parameterization);
    let norm2: f64 = reconstruction_loss(initial, &problem.data, 0)?;
    let opts = LbfgsOptions { target: opts.target.max(1e-14 * norm2), ..opts };
    let mut seconds = 0.0;
    let x0 = start_point(problem.n(), param, opts.initial_step);
    let report = lbfgs(
        |p| {
            let v = to_potential(p, param);
            let t = Instant::now();
            let s = spectrum_at(&v)?;
            seconds += t.elapsed().as_secs_f64();
            let loss = reconstruction_loss(&s, &problem.data, k)?;
            let g = loss_gradient(&s, &problem.data, k, eps)?;
            Ok((loss, chain(g, p, param, mu)))
        },
        x0,
        &opts,
    )?;
    let values = to_potential(&report.x, param);
    let mut potential = PotentialField::with_mu(values, mu)?;
    potential.physical = param == Parameterization::Squared;
    let trace = OptimizationTrace {
        iterations: report.iterations,
        losses: report.losses,
        grad_norms: report.grad_norms,
        evaluations: report.evaluations,
        stop: report.stop,
        failure: report.failure,
        epsilon: eps,
        m: initial.k(),
        eigensolve_seconds: seconds,
        potential: potential.clone(),
    };
    Ok((potential, trace))
}

/// Stiffness and either the lumped mass (geometric) or the identity.
pub fn problem_operators(mesh: &TriMesh, geometric: bool) -> Result<(SparseSymOperator, DiagOperator)> {
    let w = assemble_stiffness(mesh)?;
    let m = if geometric { assemble_mass(mesh, MassScheme::MixedVoronoi) } else { DiagOperator::identity(mesh.n_vertices()) };
    Ok((w, m))
}

pub fn optimize_potential(mesh: &TriMesh, problem: &OptimizationProblem) -> Result<(PotentialField, OptimizationTrace)> {
    let (w, m) = problem_operators(mesh, problem.geometric)?;
    optimize_potential_operators(&w, &m, problem)
}

/// Optimization over an explicit `(W, M)` pair, e.g. a 1-D interval.
/// Every iterate re-solves the `m` smallest pairs of `(W + M·diag(μV), M)`.
pub fn optimize_potential_operators(
    stiffness: &SparseSymOperator,
    mass: &DiagOperator,
    problem: &OptimizationProblem,
) -> Result<(PotentialField, OptimizationTrace)> {
    let n = stiffness.dim();
    problem.validate(n)?;
    if mass.dim() != n {
        return Err(Error::Dimension { expected: n, got: mass.dim() });
    }
    let m = problem.spectral_dim();
    let solve = |v: &[f64]| -> Result<Spectrum> {
        let d: Vec<f64> = v.iter().zip(&mass.values).map(|(v, a)| problem.mu * v * a).collect();
        let pencil = crate::fem::Pencil { h: stiffness.add_diagonal(&d)?, mass: mass.clone() };
        solve_generalized(&pencil, m, &problem.solve)
    };
    let initial = solve(&vec![0.0; n])?;
    run(problem, &initial, solve)
}

/// The problem restricted to the span of `m` Laplacian eigenvectors `Φ`:
/// each iterate diagonalizes the `m × m` matrix `diag(λ) + μΦᵀM·diag(V)Φ`
/// and lifts its eigenvectors back through `Φ`.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub problem: OptimizationProblem,
    pub basis: Spectrum,
}

impl ReducedProblem {
    pub fn reduced_dim(&self) -> usize {
        self.basis.k()
    }

    /// Ritz pairs of the projected Hamiltonian for the potential `v`.
    pub fn spectrum_at(&self, v: &[f64]) -> Result<Spectrum> {
        let phi = self.basis.vectors();
        let mut weighted = phi.clone();
        for r in 0..phi.nrows() {
            weighted.row_mut(r).scale_mut(self.problem.mu * self.basis.mass()[r] * v[r]);
        }
        let mut red = phi.transpose() * weighted;
        for (i, l) in self.basis.values().iter().enumerate() {
            red[(i, i)] += l;
        }
        let (vals, q) = dense_symmetric(red)?;
        Spectrum::new(vals, phi * q, self.basis.mass().to_vec())
    }
}

pub fn project_problem_to_lbo(problem: &OptimizationProblem, lbo: &Spectrum) -> Result<ReducedProblem> {
    let m = problem.m.unwrap_or(lbo.k()).min(lbo.k());
    let problem = OptimizationProblem { m: Some(m), ..problem.clone() };
    problem.validate(lbo.n())?;
    Ok(ReducedProblem { basis: lbo.truncated(m)?, problem })
}

pub fn optimize_reduced(reduced: &ReducedProblem) -> Result<(PotentialField, OptimizationTrace)> {
    let initial = reduced.spectrum_at(&vec![0.0; reduced.basis.n()])?;
    run(&reduced.problem, &initial, |v| reduced.spectrum_at(v))
}
