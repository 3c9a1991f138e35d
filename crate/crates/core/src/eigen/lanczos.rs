//! Shift-invert block Lanczos with full reorthogonalization and restarts.
//!
//! Each cycle builds the block Krylov space `[X, TX, T²X, ...]` of
//! `T = (H + UUᵀ + σA)^{-1} A`, A-orthonormalizes it, and extracts Ritz pairs
//! from the projected `H + UUᵀ`. The leading Ritz vectors seed the next cycle.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::woodbury::WoodburySolver;
use super::{dense_symmetric, Method, SolveOptions, Spectrum};
use crate::error::{Error, Result};
use crate::fem::SparseSymOperator;

fn a_norm(v: &[f64], mass: &[f64]) -> f64 {
    v.iter().zip(mass).map(|(a, m)| a * a * m).sum::<f64>().sqrt()
}

/// Orthonormalizes the columns of `y` in the A-inner product against the
/// A-orthonormal `basis` and each other; numerically dependent columns are dropped.
fn a_orthonormalize(basis: &DMatrix<f64>, mut y: DMatrix<f64>, mass: &[f64]) -> DMatrix<f64> {
    let n = y.nrows();
    if basis.ncols() > 0 {
        for _ in 0..2 {
            let mut ay = y.clone();
            for (i, m) in mass.iter().enumerate() {
                ay.row_mut(i).scale_mut(*m);
            }
            let c = basis.transpose() * ay;
            y -= basis * c;
        }
    }
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(y.ncols());
    for c in 0..y.ncols() {
        let mut v: Vec<f64> = y.column(c).iter().copied().collect();
        let before = a_norm(&v, mass);
        if before == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &kept {
                let d: f64 = q.iter().zip(&v).zip(mass).map(|((a, b), m)| a * b * m).sum();
                for (x, qi) in v.iter_mut().zip(q) {
                    *x -= d * qi;
                }
            }
        }
        let after = a_norm(&v, mass);
        if after > 1e-10 * before && after > 0.0 {
            v.iter_mut().for_each(|x| *x /= after);
            kept.push(v);
        }
    }
    let mut out = DMatrix::zeros(n, kept.len());
    for (c, v) in kept.iter().enumerate() {
        out.column_mut(c).copy_from_slice(v);
    }
    out
}

fn apply_h(h: &SparseSymOperator, u: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = h.mul_mat(x);
    if u.ncols() > 0 {
        y += u * (u.transpose() * x);
    }
    y
}

pub(super) fn shift_invert(
    h: &SparseSymOperator,
    mass: &[f64],
    solver: &WoodburySolver,
    k: usize,
    opts: &SolveOptions,
) -> Result<Spectrum> {
    let n = h.dim();
    let u = solver.low_rank();
    let block = n.min((2 * k).max(k + 8));
    let steps = (n / block).clamp(1, 4);
    let h_norm = h.norm_inf() + u.iter().map(|x| x * x).sum::<f64>();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start = DMatrix::from_fn(n, block, |_, _| StandardNormal.sample(&mut rng));
    let mut x = a_orthonormalize(&DMatrix::zeros(n, 0), start, mass);
    let mut worst = f64::INFINITY;

    for cycle in 0..opts.max_restarts.max(1) {
        let mut q = x.clone();
        let mut last = x.clone();
        for _ in 1..steps {
            if q.ncols() >= n {
                break;
            }
            let mut t = last.clone();
            for (i, m) in mass.iter().enumerate() {
                t.row_mut(i).scale_mut(*m);
            }
            for c in 0..t.ncols() {
                solver.solve_in_place(t.column_mut(c).as_mut_slice());
            }
            let fresh = a_orthonormalize(&q, t, mass);
            if fresh.ncols() == 0 {
                break;
            }
            let qc = q.ncols();
            q = q.resize_horizontally(qc + fresh.ncols(), 0.0);
            q.columns_mut(qc, fresh.ncols()).copy_from(&fresh);
            last = fresh;
        }
        if q.ncols() < k {
            return Err(Error::NonConvergence { iterations: cycle, residual: f64::INFINITY });
        }

        let hq = apply_h(h, u, &q);
        let s = q.transpose() * &hq;
        let (theta, y) = dense_symmetric(s)?;
        let keep = block.min(q.ncols());
        let yk = y.columns(0, keep).into_owned();
        let z = &q * &yk;
        let hz = &hq * &yk;

        worst = 0.0;
        for i in 0..k {
            let mut r2 = 0.0;
            let mut z2 = 0.0;
            for row in 0..n {
                let r = hz[(row, i)] - theta[i] * mass[row] * z[(row, i)];
                r2 += r * r;
                z2 += z[(row, i)] * z[(row, i)];
            }
            worst = f64::max(worst, r2.sqrt() / (h_norm * z2.sqrt()));
        }
        if worst <= opts.tol {
            let mut out = Spectrum::new(theta[..k].to_vec(), z.columns(0, k).into_owned(), mass.to_vec())?;
            out.method = Method::Lanczos;
            out.tol = opts.tol;
            return Ok(out);
        }
        x = a_orthonormalize(&DMatrix::zeros(n, 0), z, mass);
    }
    Err(Error::NonConvergence { iterations: opts.max_restarts, residual: worst })
}
