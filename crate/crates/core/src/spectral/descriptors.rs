use std::io::{self, Write};

use rayon::prelude::*;

use crate::eigen::Spectrum;
use crate::error::{invalid, Result};

/// Eigenvalues at or below this are treated as zero modes and skipped by WKS.
pub const WKS_MIN_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Hks,
    Wks,
}

/// Per-vertex descriptor, `values[x][s]` for schedule entry `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    pub kind: DescriptorKind,
    /// Diffusion times (HKS) or log-energies (WKS).
    pub schedule: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl DescriptorField {
    pub fn n_vertices(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.schedule.len()
    }

    /// Rescales every column to unit maximum absolute value.
    pub fn normalized_columns(&self) -> Self {
        let mut out = self.clone();
        for s in 0..self.dim() {
            let m = self.values.iter().map(|r| r[s].abs()).fold(0.0, f64::max);
            if m > 0.0 {
                for r in &mut out.values {
                    r[s] /= m;
                }
            }
        }
        out
    }

    /// CSV with a `vertex,<kind>_0,...` header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let tag = match self.kind {
            DescriptorKind::Hks => "hks",
            DescriptorKind::Wks => "wks",
        };
        write!(w, "vertex")?;
        for s in 0..self.dim() {
            write!(w, ",{tag}_{s}")?;
        }
        writeln!(w)?;
        for (x, row) in self.values.iter().enumerate() {
            write!(w, "{x}")?;
            for v in row {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn per_vertex<F>(n: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// `HKS(x, t) = Σᵢ e^{-Eᵢt} ψᵢ(x)²`.
pub fn hks(spectrum: &Spectrum, times: &[f64]) -> Result<DescriptorField> {
    if times.is_empty() {
        return invalid("empty time schedule");
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return invalid(format!("diffusion times must be finite and non-negative, got {t}"));
    }
    let weights: Vec<Vec<f64>> = times
        .iter()
        .map(|t| spectrum.values().iter().map(|e| (-e * t).exp()).collect())
        .collect();
    let psi = spectrum.vectors();
    let values = per_vertex(spectrum.n(), |x| {
        let sq: Vec<f64> = (0..spectrum.k()).map(|i| psi[(x, i)] * psi[(x, i)]).collect();
        weights.iter().map(|w| w.iter().zip(&sq).map(|(a, b)| a * b).sum()).collect()
    });
    Ok(DescriptorField { kind: DescriptorKind::Hks, schedule: times.to_vec(), values })
}

/// `count` log-energies evenly spanning `[log E_min, log E_max]` over the
/// non-zero eigenvalues, and the default bandwidth of 7 spacings.
pub fn wks_default_schedule(spectrum: &Spectrum, count: usize) -> Result<(Vec<f64>, f64)> {
    let pos: Vec<f64> = spectrum.values().iter().copied().filter(|&e| e > WKS_MIN_EIGENVALUE).collect();
    if pos.len() < 2 {
        return invalid("WKS needs at least two positive eigenvalues");
    }
    if count < 2 {
        return invalid("WKS needs at least two energies");
    }
    let lo = pos[0].ln();
    let hi = pos[pos.len() - 1].ln();
    let step = (hi - lo) / (count - 1) as f64;
    let energies = (0..count).map(|s| lo + step * s as f64).collect();
    Ok((energies, 7.0 * step))
}

/// `WKS(x, e) = Σᵢ ψᵢ(x)² g(e − log Eᵢ) / Σᵢ g(e − log Eᵢ)` with a Gaussian `g`
/// of width `sigma`, restricted to eigenvalues above [`WKS_MIN_EIGENVALUE`].
pub fn wks(spectrum: &Spectrum, log_energies: &[f64], sigma: f64) -> Result<DescriptorField> {
    if log_energies.is_empty() {
        return invalid("empty energy schedule");
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return invalid(format!("WKS bandwidth must be positive, got {sigma}"));
    }
    let modes: Vec<usize> = (0..spectrum.k()).filter(|&i| spectrum.values()[i] > WKS_MIN_EIGENVALUE).collect();
    if modes.is_empty() {
        return invalid("WKS needs at least one positive eigenvalue");
    }
    let mut weights = Vec::with_capacity(log_energies.len());
    for &e in log_energies {
        let g: Vec<f64> = modes
            .iter()
            .map(|&i| {
                let d = e - spectrum.values()[i].ln();
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let z: f64 = g.iter().sum();
        if !(z > 0.0) {
            return invalid(format!("energy {e} has no spectral support at bandwidth {sigma}"));
        }
        weights.push(g.into_iter().map(|v| v / z).collect::<Vec<f64>>());
    }
    let psi = spectrum.vectors();
    let values = per_vertex(spectrum.n(), |x| {
        let sq: Vec<f64> = modes.iter().map(|&i| psi[(x, i)] * psi[(x, i)]).collect();
        weights.iter().map(|w| w.iter().zip(&sq).map(|(a, b)| a * b).sum()).collect()
    });
    Ok(DescriptorField { kind: DescriptorKind::Wks, schedule: log_energies.to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{solve_generalized, SolveOptions};
    use crate::fem::{mesh_pencil, PotentialField};
    use crate::mesh::shapes;

    fn spectrum() -> Spectrum {
        let m = shapes::icosphere(2).unwrap();
        let p = mesh_pencil(&m, &PotentialField::zeros(m.n_vertices())).unwrap();
        solve_generalized(&p, 30, &SolveOptions::dense()).unwrap()
    }

    #[test]
    fn hks_matches_direct_sum() {
        let s = spectrum();
        let d = hks(&s, &[0.0, 0.1]).unwrap();
        let x = 17;
        let direct: f64 = (0..s.k()).map(|i| (-s.values()[i] * 0.1).exp() * s.vector(i)[x].powi(2)).sum();
        assert!((d.values[x][1] - direct).abs() < 1e-14);
        let t0: f64 = (0..s.k()).map(|i| s.vector(i)[x].powi(2)).sum();
        assert!((d.values[x][0] - t0).abs() < 1e-14);
        assert!(hks(&s, &[-1.0]).is_err());
    }

    #[test]
    fn wks_skips_constant_mode() {
        let s = spectrum();
        let (e, sigma) = wks_default_schedule(&s, 10).unwrap();
        assert!((e[0] - s.values()[1].ln()).abs() < 1e-12);
        let d = wks(&s, &e, sigma).unwrap();
        assert_eq!(d.values.len(), s.n());
        assert!(d.values.iter().flatten().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn csv_header() {
        let s = spectrum();
        let d = hks(&s, &[0.5]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("vertex,hks_0\n0,"));
        assert_eq!(text.lines().count(), s.n() + 1);
    }
}
