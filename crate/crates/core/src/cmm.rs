//! Compressed manifold modes: localized A-orthonormal modes minimizing
//! `trace(ΦᵀWΦ) + μ‖Φ‖₁,A`, computed one at a time by iteratively
//! reweighted Hamiltonian eigenproblems.
//!
//! Mode `i` alternates between the potential `Vᵢ = 1/(2(|φᵢ| + δ))` and the
//! smallest eigenvector of `(W + μA·diag(Vᵢ) + UUᵀ, A)` with
//! `U = √β·A·[φ₀ … φ_{i-1}]`, which penalizes overlap with earlier modes.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::eigen::{dense_generalized, solve_generalized, solve_lowrank_updated, SolveOptions, Spectrum};
use crate::error::{invalid, Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, DiagOperator, MassScheme, Pencil, PotentialField, SparseSymOperator};
use crate::mesh::TriMesh;

/// `Vᵢ(x) = 1/(2(|φᵢ(x)| + δ))`.
pub fn irls_potential(mode: &[f64], delta: f64) -> Result<PotentialField> {
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid(format!("IRLS smoothing δ must be positive, got {delta}"));
    }
    PotentialField::physical(mode.iter().map(|p| 0.5 / (p.abs() + delta)).collect(), 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CmmSolver {
    /// Sparse factor plus Woodbury low-rank update inside shift-invert Lanczos.
    #[default]
    Iterative,
    /// Dense penalty matrix and dense eigendecomposition.
    DenseReference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmmOptions {
    pub mu: f64,
    /// Orthogonality penalty; `None` uses `10³ ×` the largest eigenvalue seen.
    pub beta: Option<f64>,
    /// `δ = delta_rel · max|φ|` at each reweighting.
    pub delta_rel: f64,
    /// Stop when `‖φ_new − φ_old‖_A < mtol`.
    pub mtol: f64,
    pub max_iter: usize,
    /// Non-improving iterations tolerated before stopping.
    pub patience: usize,
    pub solver: CmmSolver,
    pub solve: SolveOptions,
}

impl Default for CmmOptions {
    fn default() -> Self {
        Self {
            mu: 1.0,
            beta: None,
            delta_rel: 1e-6,
            mtol: 1e-6,
            max_iter: 100,
            patience: 3,
            solver: CmmSolver::Iterative,
            solve: SolveOptions::lanczos(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeTrace {
    pub iterations: usize,
    /// `φᵀWφ + μ‖φ‖₁,A + β Σⱼ (φⱼᵀAφ)²` after each iteration.
    pub objectives: Vec<f64>,
    pub converged: bool,
    /// Set when an iteration increased the objective; the best iterate is kept.
    pub oscillation: bool,
    /// Largest `|φⱼᵀAφ|` over prior modes left by the penalty alone, before
    /// the final projection.
    pub penalty_overlap: f64,
    pub seconds: f64,
}

fn a_norm_diff(a: &[f64], b: &[f64], mass: &[f64]) -> f64 {
    a.iter().zip(b).zip(mass).map(|((x, y), m)| m * (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn a_dot(a: &[f64], b: &[f64], mass: &[f64]) -> f64 {
    a.iter().zip(b).zip(mass).map(|((x, y), m)| m * x * y).sum()
}

/// `φᵀWφ + μ‖φ‖₁,A`.
pub fn l1_objective(w: &SparseSymOperator, mass: &[f64], mu: f64, phi: &[f64]) -> f64 {
    w.quad_form(phi) + mu * phi.iter().zip(mass).map(|(p, m)| m * p.abs()).sum::<f64>()
}

/// `√β·A·Φ`.
fn penalty_factor(prior: &DMatrix<f64>, mass: &[f64], beta: f64) -> DMatrix<f64> {
    let mut u = prior.clone() * beta.sqrt();
    for (r, m) in mass.iter().enumerate() {
        u.row_mut(r).scale_mut(*m);
    }
    u
}

/// Smallest eigenpair of `(H + UUᵀ, A)`.
fn smallest(pencil: &Pencil, u: &DMatrix<f64>, opts: &CmmOptions) -> Result<(f64, Vec<f64>)> {
    let s = match opts.solver {
        CmmSolver::Iterative => solve_lowrank_updated(pencil, u, 1, &opts.solve)?,
        CmmSolver::DenseReference => {
            let h = pencil.h.to_dense() + u * u.transpose();
            dense_generalized(&h, &pencil.mass.values, 1)?
        }
    };
    Ok((s.values()[0], s.vector(0).to_vec()))
}

/// One mode by IRLS from the warm start `init`, A-orthogonal (through the
/// penalty) to the columns of `prior`.
pub fn solve_mode(
    w: &SparseSymOperator,
    mass: &DiagOperator,
    prior: &DMatrix<f64>,
    beta: f64,
    init: &[f64],
    opts: &CmmOptions,
) -> Result<(Vec<f64>, ModeTrace)> {
    let n = w.dim();
    if mass.dim() != n || init.len() != n || prior.nrows() != n {
        return Err(Error::Dimension { expected: n, got: init.len().min(mass.dim()).min(prior.nrows()) });
    }
    if !(opts.mu >= 0.0) || !(beta > 0.0) || !(opts.delta_rel > 0.0) {
        return invalid("CMM needs μ ≥ 0, β > 0 and δ > 0");
    }
    let start = Instant::now();
    let m = &mass.values;
    let u = penalty_factor(prior, m, beta);
    let objective = |phi: &[f64]| {
        let overlap: f64 = (0..prior.ncols()).map(|j| a_dot(prior.column(j).as_slice(), phi, m).powi(2)).sum();
        l1_objective(w, m, opts.mu, phi) + beta * overlap
    };
    let mut phi = init.to_vec();
    let norm = a_dot(&phi, &phi, m).sqrt();
    phi.iter_mut().for_each(|p| *p /= norm);
    let mut best = (objective(&phi), phi.clone());
    let mut trace = ModeTrace { iterations: 0, objectives: Vec::new(), converged: false, oscillation: false, penalty_overlap: 0.0, seconds: 0.0 };
    let mut stale = 0;
    for _ in 0..opts.max_iter.max(1) {
        let scale = phi.iter().fold(0.0f64, |a, p| a.max(p.abs()));
        let v = irls_potential(&phi, opts.delta_rel * scale.max(f64::MIN_POSITIVE))?;
        let d: Vec<f64> = v.values.iter().zip(m).map(|(v, a)| opts.mu * v * a).collect();
        let pencil = Pencil { h: w.add_diagonal(&d)?, mass: mass.clone() };
        let (_, mut next) = smallest(&pencil, &u, opts)?;
        if a_dot(&next, &phi, m) < 0.0 {
            next.iter_mut().for_each(|x| *x = -*x);
        }
        trace.iterations += 1;
        let change = a_norm_diff(&next, &phi, m);
        let f = objective(&next);
        trace.objectives.push(f);
        phi = next;
        if f <= best.0 + 1e-8 * best.0.abs() {
            if f < best.0 {
                best = (f, phi.clone());
            }
            stale = 0;
        } else {
            trace.oscillation = true;
            stale += 1;
        }
        if change < opts.mtol {
            trace.converged = true;
            break;
        }
        if stale >= opts.patience {
            break;
        }
    }
    trace.seconds = start.elapsed().as_secs_f64();
    Ok((best.1, trace))
}

/// Removes the A-components along the columns of `prior` (two passes) and
/// renormalizes; returns the largest overlap found before projecting.
fn project_out(phi: &mut [f64], prior: &DMatrix<f64>, mass: &[f64]) -> f64 {
    let mut before: f64 = 0.0;
    for pass in 0..2 {
        for j in 0..prior.ncols() {
            let q = prior.column(j);
            let c = a_dot(q.as_slice(), phi, mass);
            if pass == 0 {
                before = before.max(c.abs());
            }
            phi.iter_mut().zip(q.iter()).for_each(|(x, qv)| *x -= c * qv);
        }
    }
    let norm = a_dot(phi, phi, mass).sqrt();
    phi.iter_mut().for_each(|x| *x /= norm);
    before
}

#[derive(Debug, Clone)]
pub struct CompressedModes {
    /// `n × k`, one mode per column.
    pub modes: DMatrix<f64>,
    pub mass: Vec<f64>,
    pub mu: f64,
    pub beta: f64,
    /// `φᵢᵀWφᵢ + μ‖φᵢ‖₁,A` per mode.
    pub objectives: Vec<f64>,
    pub traces: Vec<ModeTrace>,
}

impl CompressedModes {
    pub fn k(&self) -> usize {
        self.modes.ncols()
    }

    /// `max |ΦᵀAΦ − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = crate::eigen::gram(&self.modes, &self.mass);
        let mut e: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                e = e.max((g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        e
    }

    /// Largest off-diagonal `|ΦᵀAΦ|` entry.
    pub fn max_off_diagonal(&self) -> f64 {
        let g = crate::eigen::gram(&self.modes, &self.mass);
        let mut e: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    e = e.max(g[(i, j)].abs());
                }
            }
        }
        e
    }

    /// Mean over modes of the fraction of vertices with `|φ| > threshold·max|φ|`.
    pub fn support_fraction(&self, threshold: f64) -> f64 {
        let n = self.modes.nrows() as f64;
        let total: f64 = self
            .modes
            .column_iter()
            .map(|c| {
                let mx = c.iter().fold(0.0f64, |a, p| a.max(p.abs()));
                c.iter().filter(|p| p.abs() > threshold * mx).count() as f64 / n
            })
            .sum();
        total / self.k() as f64
    }

    pub fn total_objective(&self) -> f64 {
        self.objectives.iter().sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.traces.iter().map(|t| t.seconds).sum()
    }

    /// Modes in the spectrum container, values holding the per-mode objectives.
    pub fn to_spectrum(&self) -> Result<Spectrum> {
        Spectrum::from_columns(self.objectives.clone(), self.modes.clone(), self.mass.clone())
    }
}

pub fn cmm_basis(mesh: &TriMesh, k: usize, opts: &CmmOptions) -> Result<CompressedModes> {
    let w = assemble_stiffness(mesh)?;
    let a = assemble_mass(mesh, MassScheme::MixedVoronoi);
    cmm_basis_operators(&w, &a, k, opts)
}

/// Sequential modes, each warm-started from the matching Laplacian
/// eigenfunction. The penalty leaves overlaps of order `E/β`; each mode is
/// projected off its predecessors before the next one starts.
pub fn cmm_basis_operators(w: &SparseSymOperator, mass: &DiagOperator, k: usize, opts: &CmmOptions) -> Result<CompressedModes> {
    let n = w.dim();
    if k == 0 || k > n {
        return invalid(format!("k = {k} must lie in 1..={n}"));
    }
    let lbo = solve_generalized(&Pencil { h: w.clone(), mass: mass.clone() }, k, &opts.solve)?;
    let mut largest = lbo.values()[k - 1].abs().max(f64::MIN_POSITIVE);
    let mut modes = DMatrix::zeros(n, 0);
    let mut objectives = Vec::with_capacity(k);
    let mut traces = Vec::with_capacity(k);
    let mut beta_used: f64 = 0.0;
    for i in 0..k {
        let beta = opts.beta.unwrap_or(1e3 * largest);
        beta_used = beta_used.max(beta);
        let (mut phi, mut trace) = solve_mode(w, mass, &modes, beta, lbo.vector(i), opts)?;
        trace.penalty_overlap = project_out(&mut phi, &modes, &mass.values);
        let obj = l1_objective(w, &mass.values, opts.mu, &phi);
        largest = largest.max(obj);
        objectives.push(obj);
        traces.push(trace);
        modes = modes.resize_horizontally(i + 1, 0.0);
        modes.column_mut(i).copy_from_slice(&phi);
    }
    Ok(CompressedModes { modes, mass: mass.values.clone(), mu: opts.mu, beta: beta_used, objectives, traces })
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub k: usize,
    pub iterative_seconds: f64,
    pub dense_seconds: f64,
}

/// Wall-clock comparison of the iterative and dense-reference paths under
/// identical stopping rules.
pub fn timing_report(mesh: &TriMesh, k: usize, opts: &CmmOptions) -> Result<TimingRow> {
    let it = cmm_basis(mesh, k, &CmmOptions { solver: CmmSolver::Iterative, ..*opts })?;
    let de = cmm_basis(mesh, k, &CmmOptions { solver: CmmSolver::DenseReference, ..*opts })?;
    Ok(TimingRow { n: mesh.n_vertices(), k, iterative_seconds: it.total_seconds(), dense_seconds: de.total_seconds() })
}
