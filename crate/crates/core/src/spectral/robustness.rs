//! Stability of eigenfunctions under geometric and potential noise, and the
//! convergence order of the first-order perturbation predictor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::eigen::{predict_perturbed, solve_generalized, SolveOptions, Spectrum};
use crate::error::{invalid, Error, Result};
use crate::fem::{mesh_pencil, DiagOperator, PotentialField};
use crate::mesh::{perturb_vertices, TriMesh};

/// Adds i.i.d. Gaussian noise of variance `variance_fraction · Var(V)`.
pub fn add_potential_noise(potential: &PotentialField, variance_fraction: f64, seed: u64) -> Result<PotentialField> {
    if !(variance_fraction >= 0.0) || !variance_fraction.is_finite() {
        return invalid(format!("variance fraction must be finite and ≥ 0, got {variance_fraction}"));
    }
    let v = &potential.values;
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = (variance_fraction * var).sqrt();
    let mut out = potential.clone();
    if sd > 0.0 {
        let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.values.iter_mut().for_each(|x| *x += normal.sample(&mut rng));
    }
    Ok(out)
}

/// Pearson correlation over vertices, in absolute value (sign-aligned).
pub fn aligned_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(1) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        // Constant functions: correlated iff both are constant.
        return if saa == sbb { 1.0 } else { 0.0 };
    }
    (sab / (saa * sbb).sqrt()).abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseReport {
    pub sigma_fraction: f64,
    pub potential_variance_fraction: f64,
    pub clean_values: Vec<f64>,
    pub noisy_values: Vec<f64>,
    pub correlations: Vec<f64>,
}

/// Eigenfunctions of the clean and noisy Hamiltonians (same connectivity)
/// compared index by index.
pub fn noise_robustness(
    mesh: &TriMesh,
    potential: &PotentialField,
    k: usize,
    sigma_fraction: f64,
    potential_variance_fraction: f64,
    seed: u64,
    opts: &SolveOptions,
) -> Result<NoiseReport> {
    let noisy_mesh = perturb_vertices(mesh, sigma_fraction, seed)?;
    let noisy_pot = add_potential_noise(potential, potential_variance_fraction, seed.wrapping_add(1))?;
    let clean = solve_generalized(&mesh_pencil(mesh, potential)?, k, opts)?;
    let noisy = solve_generalized(&mesh_pencil(&noisy_mesh, &noisy_pot)?, k, opts)?;
    let correlations = (0..k).map(|i| aligned_correlation(clean.vector(i), noisy.vector(i))).collect();
    Ok(NoiseReport {
        sigma_fraction,
        potential_variance_fraction,
        clean_values: clean.values().to_vec(),
        noisy_values: noisy.values().to_vec(),
        correlations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictorSweep {
    pub eps: Vec<f64>,
    /// Worst A-norm error of the predicted eigenvectors over the checked modes.
    pub errors: Vec<f64>,
    /// Same, for the unperturbed eigenvectors.
    pub baseline: Vec<f64>,
    pub slope: f64,
    pub modes: Vec<usize>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Moves vertices along a seeded random direction (unit scale = mean edge
/// length) and perturbs the potential by `ε·δV`, then compares the
/// first-order prediction (from the full clean spectrum) with a re-solve.
pub fn predictor_sweep(mesh: &TriMesh, potential: &PotentialField, modes: &[usize], eps: &[f64], seed: u64) -> Result<PredictorSweep> {
    let n = mesh.n_vertices();
    if modes.iter().any(|&i| i >= n) || modes.is_empty() || eps.len() < 2 {
        return invalid("predictor sweep needs valid modes and at least two ε values");
    }
    let dense = SolveOptions::dense();
    let p0 = mesh_pencil(mesh, potential)?;
    let s0 = solve_generalized(&p0, n, &dense)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = mesh.mean_edge_length();
    let dir: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| h * rng.random_range(-1.0..1.0))).collect();
    let spread = (potential.max() - potential.min()).max(1.0);
    let dv: Vec<f64> = (0..n).map(|_| spread * rng.random_range(-1.0..1.0)).collect();
    let mut errors = Vec::with_capacity(eps.len());
    let mut baseline = Vec::with_capacity(eps.len());
    for &e in eps {
        let moved: Vec<_> = mesh.vertices().iter().zip(&dir).map(|(p, d)| [p[0] + e * d[0], p[1] + e * d[1], p[2] + e * d[2]]).collect();
        let m1 = mesh.with_vertices(moved)?;
        let v1: Vec<f64> = potential.values.iter().zip(&dv).map(|(v, d)| v + e * d).collect();
        let pot1 = PotentialField::with_mu(v1, potential.mu)?;
        let p1 = mesh_pencil(&m1, &pot1)?;
        let dh = p1.h.combine(1.0, &p0.h, -1.0)?;
        let da = DiagOperator::new(p1.mass.values.iter().zip(&p0.mass.values).map(|(a, b)| a - b).collect());
        let pred = predict_perturbed(&s0, &dh, &da)?;
        let top = modes.iter().max().copied().unwrap_or(0) + 1;
        let s1 = solve_generalized(&p1, top, &dense)?;
        let (mut worst, mut base): (f64, f64) = (0.0, 0.0);
        for &i in modes {
            let exact = s1.vector(i);
            worst = worst.max(aligned_distance(pred.vectors.column(i).as_slice(), exact, &p1.mass.values));
            base = base.max(aligned_distance(s0.vector(i), exact, &p1.mass.values));
        }
        errors.push(worst);
        baseline.push(base);
    }
    let slope = loglog_slope(eps, &errors);
    Ok(PredictorSweep { eps: eps.to_vec(), errors, baseline, slope, modes: modes.to_vec() })
}

fn aligned_distance(a: &[f64], b: &[f64], mass: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).zip(mass).map(|((x, y), m)| x * y * m).sum();
    let s = if dot < 0.0 { -1.0 } else { 1.0 };
    a.iter().zip(b).zip(mass).map(|((x, y), m)| m * (s * x - y).powi(2)).sum::<f64>().sqrt()
}

/// Index-by-index sign-aligned correlations of two spectra on one vertex set.
pub fn correlations(a: &Spectrum, b: &Spectrum, k: usize) -> Result<Vec<f64>> {
    if a.k() < k || b.k() < k || a.n() != b.n() {
        return Err(Error::Dimension { expected: k, got: a.k().min(b.k()) });
    }
    Ok((0..k).map(|i| aligned_correlation(a.vector(i), b.vector(i))).collect())
}
