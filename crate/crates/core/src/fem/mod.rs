//! Linear finite-element operators: cotangent stiffness `W`, lumped mass `A`,
//! potentials and the Hamiltonian pencil `(W + A·diag(μV), A)`.
//!
//! `W` uses the positive-semidefinite sign convention: off-diagonal
//! `-(cot α + cot β)/2`, diagonal equal to minus the off-diagonal row sum,
//! so `W·1 = 0` and all generalized eigenvalues of `(W, A)` are `≥ 0`.
//! Boundary edges carry a single cotangent term, which yields homogeneous
//! Neumann conditions.

mod sparse;

pub use sparse::{DiagOperator, SparseSymOperator};

use crate::eigen::Spectrum;
use crate::error::{Error, Result};
use crate::mesh::{cross, dot, norm, sub, Interval, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassScheme {
    #[default]
    MixedVoronoi,
    Barycentric,
}

/// Per-vertex potential `V` with its scale `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub values: Vec<f64>,
    pub mu: f64,
    /// When set, `V ≥ 0` is enforced at construction.
    pub physical: bool,
}

impl PotentialField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_mu(values, 1.0)
    }

    pub fn with_mu(values: Vec<f64>, mu: f64) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("potential entry {i}")));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!("potential scale μ must be finite and ≥ 0, got {mu}")));
        }
        Ok(Self { values, mu, physical: false })
    }

    /// Non-negative potential.
    pub fn physical(values: Vec<f64>, mu: f64) -> Result<Self> {
        let mut p = Self::with_mu(values, mu)?;
        if let Some(i) = p.values.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidArgument(format!("physical potential is negative at vertex {i}")));
        }
        p.physical = true;
        Ok(p)
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n], mu: 1.0, physical: true }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n], mu: 1.0, physical: c >= 0.0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `μ·V`, the values that actually enter the operator.
    pub fn scaled(&self) -> Vec<f64> {
        self.values.iter().map(|v| self.mu * v).collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The generalized eigenproblem `H ψ = E A ψ`.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub h: SparseSymOperator,
    pub mass: DiagOperator,
}

impl Pencil {
    pub fn dim(&self) -> usize {
        self.h.dim()
    }
}

/// Cotangent of the angle between `u` and `v`.
fn cot(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    dot(u, v) / norm(&cross(u, v))
}

pub fn assemble_stiffness(mesh: &TriMesh) -> Result<SparseSymOperator> {
    let p = mesh.vertices();
    let mut entries = Vec::with_capacity(mesh.n_triangles() * 6);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for c in 0..3 {
            let (i, j, k) = (tri[c], tri[(c + 1) % 3], tri[(c + 2) % 3]);
            let w = 0.5 * cot(&sub(&p[i], &p[k]), &sub(&p[j], &p[k]));
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("cotangent weight in triangle {t}")));
            }
            entries.push((i.min(j), i.max(j), -w));
            entries.push((i, i, w));
            entries.push((j, j, w));
        }
    }
    SparseSymOperator::from_upper_triplets(mesh.n_vertices(), &entries)
}

/// Combinatorial Laplacian `D − Adj` of the edge graph, built from
/// connectivity alone.
pub fn graph_laplacian(n: usize, triangles: &[[usize; 3]]) -> Result<SparseSymOperator> {
    let mut edges = Vec::with_capacity(triangles.len() * 3);
    for (t, tri) in triangles.iter().enumerate() {
        if tri.iter().any(|&v| v >= n) {
            return Err(Error::Validation(format!("triangle {t} references a vertex outside 0..{n}")));
        }
        for c in 0..3 {
            let (a, b) = (tri[c], tri[(c + 1) % 3]);
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let mut entries = Vec::with_capacity(edges.len() * 3);
    for (a, b) in edges {
        entries.push((a, b, -1.0));
        entries.push((a, a, 1.0));
        entries.push((b, b, 1.0));
    }
    SparseSymOperator::from_upper_triplets(n, &entries)
}

pub fn assemble_mass(mesh: &TriMesh, scheme: MassScheme) -> DiagOperator {
    let p = mesh.vertices();
    let mut m = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        match scheme {
            MassScheme::Barycentric => {
                for &v in tri {
                    m[v] += area / 3.0;
                }
            }
            MassScheme::MixedVoronoi => {
                let e = |a: usize, b: usize| sub(&p[tri[b]], &p[tri[a]]);
                // Corner c sits at tri[c]; its angle lies between edges to the other two corners.
                let corner_dot = |c: usize| dot(&e(c, (c + 1) % 3), &e(c, (c + 2) % 3));
                let obtuse = (0..3).find(|&c| corner_dot(c) < 0.0);
                match obtuse {
                    Some(o) => {
                        for c in 0..3 {
                            m[tri[c]] += if c == o { area / 2.0 } else { area / 4.0 };
                        }
                    }
                    None => {
                        for c in 0..3 {
                            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
                            // Edge c→a is opposite corner b, edge c→b opposite corner a.
                            let cot_a = cot(&e(a, c), &e(a, b));
                            let cot_b = cot(&e(b, c), &e(b, a));
                            let lca = dot(&e(c, a), &e(c, a));
                            let lcb = dot(&e(c, b), &e(c, b));
                            m[tri[c]] += (lca * cot_b + lcb * cot_a) / 8.0;
                        }
                    }
                }
            }
        }
    }
    DiagOperator::new(m)
}

/// `H = W + A·diag(μV)`; shares `W`'s sparsity pattern.
pub fn assemble_hamiltonian(stiffness: &SparseSymOperator, mass: &DiagOperator, potential: &PotentialField) -> Result<Pencil> {
    let n = stiffness.dim();
    if mass.dim() != n {
        return Err(Error::Dimension { expected: n, got: mass.dim() });
    }
    if potential.len() != n {
        return Err(Error::Dimension { expected: n, got: potential.len() });
    }
    let d: Vec<f64> = mass.values.iter().zip(potential.scaled()).map(|(a, v)| a * v).collect();
    Ok(Pencil { h: stiffness.add_diagonal(&d)?, mass: mass.clone() })
}

/// Convenience: stiffness, mixed-Voronoi mass and Hamiltonian in one go.
pub fn mesh_pencil(mesh: &TriMesh, potential: &PotentialField) -> Result<Pencil> {
    let w = assemble_stiffness(mesh)?;
    let a = assemble_mass(mesh, MassScheme::MixedVoronoi);
    assemble_hamiltonian(&w, &a, potential)
}

/// Linear elements on `[0, 1]` with natural (Neumann) ends and the potential
/// lumped onto the mass diagonal.
pub fn assemble_interval(interval: &Interval, potential: &PotentialField) -> Result<Pencil> {
    let n = interval.len();
    if n < 2 {
        return Err(Error::InvalidArgument("interval needs at least 2 samples".into()));
    }
    let h = interval.spacing();
    let mut entries = Vec::with_capacity(3 * n);
    let mut mass = vec![0.0; n];
    for e in 0..n - 1 {
        entries.push((e, e, 1.0 / h));
        entries.push((e + 1, e + 1, 1.0 / h));
        entries.push((e, e + 1, -1.0 / h));
        mass[e] += h / 2.0;
        mass[e + 1] += h / 2.0;
    }
    let w = SparseSymOperator::from_upper_triplets(n, &entries)?;
    assemble_hamiltonian(&w, &DiagOperator::new(mass), potential)
}

/// Largest `μ` keeping eigenfunctions up to `i` (0-based) out of the
/// high-potential region, from the first-order energy estimate
/// `E_i ≈ λ_i + μ⟨φ_i, Vφ_i⟩_A`. The bracket uses the Laplacian
/// eigenfunction. Returns `+∞` when `max V ≤ ⟨φ_i, Vφ_i⟩_A`.
pub fn mu_upper_bound(lbo: &Spectrum, potential: &[f64], i: usize) -> Result<f64> {
    if i >= lbo.k() {
        return Err(Error::InvalidArgument(format!("index {i} outside computed spectrum of {}", lbo.k())));
    }
    if potential.len() != lbo.n() {
        return Err(Error::Dimension { expected: lbo.n(), got: potential.len() });
    }
    let phi = lbo.vector(i);
    let bracket: f64 = (0..lbo.n()).map(|x| lbo.mass()[x] * potential[x] * phi[x] * phi[x]).sum();
    let vmax = potential.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(mu_bound_value(lbo.values()[i], vmax, bracket))
}

pub fn mu_bound_value(lambda: f64, vmax: f64, bracket: f64) -> f64 {
    let denom = vmax - bracket;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        lambda / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn right_triangle() -> TriMesh {
        TriMesh::new(vec![[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn right_isoceles_weights() {
        let w = assemble_stiffness(&right_triangle()).unwrap();
        assert!(w.get(1, 2).abs() < 1e-15);
        assert!((w.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((w.get(0, 2) + 0.5).abs() < 1e-15);
        let d = w.diagonal();
        for (a, b) in d.iter().zip([1.0, 0.5, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn barycentric_single_triangle() {
        let a = assemble_mass(&right_triangle(), MassScheme::Barycentric);
        for v in a.values {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_voronoi_partitions_area() {
        for mesh in [shapes::icosphere(2).unwrap(), shapes::finger_plate(15, 12).unwrap(), shapes::cube(4).unwrap()] {
            let total = mesh.total_area();
            for scheme in [MassScheme::MixedVoronoi, MassScheme::Barycentric] {
                let a = assemble_mass(&mesh, scheme);
                assert!((a.total() - total).abs() < 1e-10 * total);
                assert!(a.values.iter().all(|&v| v > 0.0));
            }
        }
    }

    #[test]
    fn obtuse_fan_positive() {
        // Fan of flat obtuse triangles around the origin.
        let k = 7;
        let mut v = vec![[0.0, 0.0, 0.0]];
        for i in 0..k {
            let t = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            v.push([t.cos(), 0.15 * t.sin(), 0.0]);
        }
        let tris: Vec<[usize; 3]> = (0..k).map(|i| [0, 1 + i, 1 + (i + 1) % k]).collect();
        let m = TriMesh::new(v, tris).unwrap();
        let a = assemble_mass(&m, MassScheme::MixedVoronoi);
        assert!(a.values.iter().all(|&x| x > 0.0));
        assert!((a.total() - m.total_area()).abs() < 1e-12);
    }

    #[test]
    fn constants_in_kernel() {
        let m = shapes::finger_plate(12, 9).unwrap();
        let w = assemble_stiffness(&m).unwrap();
        let y = w.apply(&vec![1.0; m.n_vertices()]);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn hamiltonian_zero_and_pattern() {
        let m = shapes::icosphere(1).unwrap();
        let w = assemble_stiffness(&m).unwrap();
        let a = assemble_mass(&m, MassScheme::MixedVoronoi);
        let p0 = assemble_hamiltonian(&w, &a, &PotentialField::zeros(m.n_vertices())).unwrap();
        assert_eq!(p0.h, w);
        let v: Vec<f64> = (0..m.n_vertices()).map(|i| i as f64).collect();
        let p = assemble_hamiltonian(&w, &a, &PotentialField::new(v).unwrap()).unwrap();
        assert_eq!(p.h.nnz(), w.nnz());
        assert!(assemble_hamiltonian(&w, &a, &PotentialField::zeros(3)).is_err());
    }

    #[test]
    fn interval_operators() {
        let iv = Interval::new(5).unwrap();
        let p = assemble_interval(&iv, &PotentialField::zeros(5)).unwrap();
        assert!((p.mass.total() - 1.0).abs() < 1e-15);
        assert_eq!(p.h.get(0, 0), 4.0);
        assert_eq!(p.h.get(1, 1), 8.0);
        assert_eq!(p.h.get(0, 1), -4.0);
    }

    #[test]
    fn mu_bound_substitution() {
        assert_eq!(mu_bound_value(10.0, 2.0, 1.0), 10.0);
        assert_eq!(mu_bound_value(10.0, 1.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn potential_validation() {
        assert!(PotentialField::new(vec![f64::NAN]).is_err());
        assert!(PotentialField::physical(vec![-1.0], 1.0).is_err());
        assert!(PotentialField::with_mu(vec![1.0], -1.0).is_err());
    }
}
