use nalgebra::{Cholesky, DMatrix, Dyn};

use super::factor::EnvelopeCholesky;
use crate::error::{Error, Result};
use crate::fem::SparseSymOperator;

/// Applies `(K + UUᵀ)^{-1}` with `K = H + σA` through the Woodbury identity
///
/// `(K + UUᵀ)^{-1} = K^{-1} - K^{-1}U (I + UᵀK^{-1}U)^{-1} UᵀK^{-1}`,
///
/// reusing one sparse factorization of `K` and an `r × r` dense capacitance
/// factor.
#[derive(Debug, Clone)]
pub struct WoodburySolver {
    factor: EnvelopeCholesky,
    shift: f64,
    u: DMatrix<f64>,
    kinv_u: DMatrix<f64>,
    capacitance: Option<Cholesky<f64, Dyn>>,
}

impl WoodburySolver {
    /// Uses the smallest shift `σ ≥ 1e-6·trace(H)/trace(A)` (growing tenfold
    /// on failure) for which `H + σA` admits a Cholesky factor.
    pub fn new(h: &SparseSymOperator, mass: &[f64], u: DMatrix<f64>) -> Result<Self> {
        let total_mass: f64 = mass.iter().sum();
        let scale = if total_mass > 0.0 { h.trace().abs() / total_mass } else { 0.0 };
        let scale = scale.max(h.norm_inf() * 1e-3 / mass.iter().fold(0.0f64, |a, m| a.max(*m)).max(f64::MIN_POSITIVE));
        let mut shift = (1e-6 * scale).max(f64::MIN_POSITIVE);
        let mut last_err = None;
        for _ in 0..40 {
            match Self::with_shift(h, mass, u.clone(), shift) {
                Ok(s) => return Ok(s),
                Err(e @ Error::NotPositiveDefinite { .. }) => {
                    last_err = Some(e);
                    shift *= 10.0;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::Singular("could not find a positive definite shift".into())))
    }

    pub fn with_shift(h: &SparseSymOperator, mass: &[f64], u: DMatrix<f64>, shift: f64) -> Result<Self> {
        let n = h.dim();
        if mass.len() != n {
            return Err(Error::Dimension { expected: n, got: mass.len() });
        }
        if u.nrows() != n {
            return Err(Error::Dimension { expected: n, got: u.nrows() });
        }
        let factor = EnvelopeCholesky::factor(h, if shift != 0.0 { Some((shift, mass)) } else { None })?;
        let r = u.ncols();
        let mut kinv_u = u.clone();
        for c in 0..r {
            factor.solve_in_place(kinv_u.column_mut(c).as_mut_slice());
        }
        let capacitance = if r > 0 {
            let cap = DMatrix::<f64>::identity(r, r) + u.transpose() * &kinv_u;
            let cap = (&cap + cap.transpose()) * 0.5;
            Some(Cholesky::new(cap).ok_or_else(|| Error::Singular("Woodbury capacitance matrix".into()))?)
        } else {
            None
        };
        Ok(Self { factor, shift, u, kinv_u, capacitance })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn low_rank(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.factor.solve_in_place(b);
        if let Some(cap) = &self.capacitance {
            let z = nalgebra::DVector::from_column_slice(b);
            let t = cap.solve(&(self.u.transpose() * &z));
            let corr = &self.kinv_u * t;
            for (x, c) in b.iter_mut().zip(corr.iter()) {
                *x -= c;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
