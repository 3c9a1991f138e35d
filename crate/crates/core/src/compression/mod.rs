//! Spectral coding of vertex positions: project the coordinate functions
//! onto the first `k` basis functions, quantize the coefficients uniformly
//! and rebuild the basis on the decoder side.
//!
//! * `Mhb` – graph Laplacian `D − Adj` with identity mass, decodable from
//!   connectivity alone.
//! * `HOpt` – a Hamiltonian with an explicit (transmitted) potential, over
//!   either the graph Laplacian or the cotangent operators. The cotangent
//!   variant needs the original geometry and is an analysis-side reference.
//! * `HReordered` – vertices sorted by ascending potential; the decoder
//!   applies the fixed potential `α·diag(1..n) + β` to the graph Laplacian.

mod container;

pub use container::{from_bytes, to_bytes, HEADER_BITS, MAGIC, VERSION};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::eigen::{solve_generalized, SolveOptions, Spectrum};
use crate::error::{invalid, Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, graph_laplacian, DiagOperator, MassScheme, Pencil};
use crate::mesh::{Point3, TriMesh};
use crate::optim::{optimize_potential_operators, OptimizationProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Mhb,
    HOpt,
    HReordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Operators {
    /// `D − Adj`, identity mass.
    Graph,
    /// Cotangent stiffness, mixed-Voronoi mass.
    Cotangent,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompressionMode {
    Mhb,
    HOpt { potential: Vec<f64>, operators: Operators },
    HReordered { potential: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Raw(Vec<f64>),
    Quantized { values: Vec<i64>, width: u8 },
}

/// Encoded geometry. Coefficients are stored coordinate-major
/// (`x₀..x_{k-1}, y₀.., z₀..`).
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMesh {
    pub kind: BasisKind,
    pub operators: Operators,
    pub n: usize,
    pub k: usize,
    pub qstep: f64,
    pub coefficients: Coefficients,
    /// `HOpt`: the potential in transmitted vertex order.
    pub potential: Option<Vec<f64>>,
    /// `HReordered`: `(α, β)`.
    pub affine: Option<(f64, f64)>,
    /// `HReordered`: `order[new] = old`. Implied by the order of the
    /// transmitted connectivity, so it is not counted in the bitrate.
    pub order: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bitrate {
    pub header: u64,
    pub coefficients: u64,
    pub potential: u64,
    pub side: u64,
}

impl Bitrate {
    pub fn total(&self) -> u64 {
        self.header + self.coefficients + self.potential + self.side
    }

    pub fn excluding_potential(&self) -> u64 {
        self.header + self.coefficients + self.side
    }
}

impl CompressedMesh {
    /// `k × 3` de-quantized coefficient table.
    pub fn coefficient_table(&self) -> DMatrix<f64> {
        let flat: Vec<f64> = match &self.coefficients {
            Coefficients::Raw(v) => v.clone(),
            Coefficients::Quantized { values, .. } => values.iter().map(|&q| q as f64 * self.qstep).collect(),
        };
        DMatrix::from_column_slice(self.k, 3, &flat)
    }

    pub fn bitrate(&self) -> Bitrate {
        let width = match &self.coefficients {
            Coefficients::Raw(_) => 64,
            Coefficients::Quantized { width, .. } => *width as u64,
        };
        Bitrate {
            header: HEADER_BITS,
            coefficients: 3 * self.k as u64 * width,
            potential: if self.potential.is_some() { 64 * self.n as u64 } else { 0 },
            side: if self.affine.is_some() { 128 } else { 0 },
        }
    }
}

/// Positions rebuilt by [`decode`], in transmitted vertex order. Low-`k`
/// reconstructions may collapse triangles, so no mesh validation happens here.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

impl Decoded {
    /// Positions indexed like the original mesh, undoing a reordering.
    pub fn in_original_order(&self, order: Option<&[usize]>) -> Vec<Point3> {
        match order {
            None => self.vertices.clone(),
            Some(o) => {
                let mut out = vec![[0.0; 3]; o.len()];
                for (new, &old) in o.iter().enumerate() {
                    out[old] = self.vertices[new];
                }
                out
            }
        }
    }

    pub fn to_mesh(&self) -> Result<TriMesh> {
        TriMesh::new(self.vertices.clone(), self.triangles.clone())
    }
}

/// Rank ordering by ascending value, ties broken by index: `order[new] = old`.
pub fn potential_order(v: &[f64]) -> Vec<usize> {
    let mut o: Vec<usize> = (0..v.len()).collect();
    o.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    o
}

/// Least-squares `(α, β)` minimizing `‖α·(1..n) + β − v‖²`.
pub fn fit_affine_ranks(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.len() < 2 {
        return (0.0, v.first().copied().unwrap_or(0.0));
    }
    let mean_r = (n + 1.0) / 2.0;
    let mean_v = v.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in v.iter().enumerate() {
        let dx = (i + 1) as f64 - mean_r;
        sxy += dx * (y - mean_v);
        sxx += dx * dx;
    }
    let a = sxy / sxx;
    (a, mean_v - a * mean_r)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return invalid(format!("k = {k} must lie in 1..={n}"));
    }
    Ok(())
}

fn check_potential(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension { expected: n, got: v.len() });
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("potential entry {i}")));
    }
    Ok(())
}

/// Basis pencil for a mode, from connectivity and (cotangent only) geometry.
fn basis_pencil(
    kind: BasisKind,
    operators: Operators,
    n: usize,
    triangles: &[[usize; 3]],
    geometry: Option<&TriMesh>,
    potential: Option<&[f64]>,
    affine: Option<(f64, f64)>,
) -> Result<Pencil> {
    let (stiffness, mass) = match operators {
        Operators::Graph => (graph_laplacian(n, triangles)?, DiagOperator::identity(n)),
        Operators::Cotangent => {
            let m = geometry.ok_or_else(|| Error::InvalidArgument("cotangent basis needs the reference geometry".into()))?;
            if m.n_vertices() != n || m.triangles() != triangles {
                return invalid("reference geometry does not match the transmitted connectivity");
            }
            (assemble_stiffness(m)?, assemble_mass(m, MassScheme::MixedVoronoi))
        }
    };
    let diag: Vec<f64> = match (kind, potential, affine) {
        (BasisKind::HOpt, Some(v), _) => v.iter().zip(&mass.values).map(|(v, a)| v * a).collect(),
        (BasisKind::HReordered, _, Some((a, b))) => (0..n).map(|i| a * (i + 1) as f64 + b).collect(),
        _ => vec![0.0; n],
    };
    Ok(Pencil { h: stiffness.add_diagonal(&diag)?, mass })
}

fn basis(pencil: &Pencil, k: usize) -> Result<Spectrum> {
    solve_generalized(pencil, k, &SolveOptions::default())
}

fn positions(mesh: &TriMesh) -> DMatrix<f64> {
    let v = mesh.vertices();
    DMatrix::from_fn(v.len(), 3, |r, c| v[r][c])
}

fn quantize(coeffs: &DMatrix<f64>, qstep: f64) -> Result<Coefficients> {
    if qstep == 0.0 {
        return Ok(Coefficients::Raw(coeffs.as_slice().to_vec()));
    }
    let values: Vec<i64> = coeffs.iter().map(|c| (c / qstep).round() as i64).collect();
    let max = values.iter().map(|q| q.unsigned_abs()).max().unwrap_or(0);
    let width = 1 + (64 - max.leading_zeros()) as u8;
    if width > 63 {
        return invalid(format!("quantization step {qstep} is too fine for the coefficient range"));
    }
    Ok(Coefficients::Quantized { values, width })
}

/// Encodes `mesh` (already in transmitted order) with the first `k` columns
/// of a precomputed basis.
fn encode_in_basis(
    mesh: &TriMesh,
    basis: &Spectrum,
    kind: BasisKind,
    operators: Operators,
    k: usize,
    qstep: f64,
) -> Result<CompressedMesh> {
    let x = positions(mesh);
    let mut mx = x.clone();
    for (r, m) in basis.mass().iter().enumerate() {
        mx.row_mut(r).scale_mut(*m);
    }
    let coeffs = basis.vectors().columns(0, k).transpose() * mx;
    Ok(CompressedMesh {
        kind,
        operators,
        n: mesh.n_vertices(),
        k,
        qstep,
        coefficients: quantize(&coeffs, qstep)?,
        potential: None,
        affine: None,
        order: None,
    })
}

fn check_qstep(qstep: f64) -> Result<()> {
    if !(qstep >= 0.0) || !qstep.is_finite() {
        return invalid(format!("quantization step must be finite and ≥ 0, got {qstep}"));
    }
    Ok(())
}

pub fn encode(mesh: &TriMesh, mode: &CompressionMode, k: usize, qstep: f64) -> Result<CompressedMesh> {
    let n = mesh.n_vertices();
    check_k(k, n)?;
    check_qstep(qstep)?;
    match mode {
        CompressionMode::Mhb => {
            let p = basis_pencil(BasisKind::Mhb, Operators::Graph, n, mesh.triangles(), None, None, None)?;
            encode_in_basis(mesh, &basis(&p, k)?, BasisKind::Mhb, Operators::Graph, k, qstep)
        }
        CompressionMode::HOpt { potential, operators } => {
            check_potential(potential, n)?;
            let p = basis_pencil(BasisKind::HOpt, *operators, n, mesh.triangles(), Some(mesh), Some(potential), None)?;
            let mut c = encode_in_basis(mesh, &basis(&p, k)?, BasisKind::HOpt, *operators, k, qstep)?;
            c.potential = Some(potential.clone());
            Ok(c)
        }
        CompressionMode::HReordered { potential } => {
            check_potential(potential, n)?;
            let order = potential_order(potential);
            let sorted: Vec<f64> = order.iter().map(|&i| potential[i]).collect();
            let affine = fit_affine_ranks(&sorted);
            let reordered = mesh.reorder(&order)?;
            let p = basis_pencil(BasisKind::HReordered, Operators::Graph, n, reordered.triangles(), None, None, Some(affine))?;
            let mut c = encode_in_basis(&reordered, &basis(&p, k)?, BasisKind::HReordered, Operators::Graph, k, qstep)?;
            c.affine = Some(affine);
            c.order = Some(order);
            Ok(c)
        }
    }
}

/// Vertex-index-preserving triangle list in transmitted order.
pub fn transmitted_connectivity(mesh: &TriMesh, c: &CompressedMesh) -> Result<Vec<[usize; 3]>> {
    match &c.order {
        Some(o) => Ok(mesh.reorder(o)?.triangles().to_vec()),
        None => Ok(mesh.triangles().to_vec()),
    }
}

/// Rebuilds positions from the stream and the transmitted connectivity.
/// `reference` supplies the geometry for the cotangent `HOpt` variant.
pub fn decode(c: &CompressedMesh, triangles: &[[usize; 3]], reference: Option<&TriMesh>) -> Result<Decoded> {
    check_k(c.k, c.n).map_err(|_| Error::Corrupt(format!("k = {} exceeds decoder dimension {}", c.k, c.n)))?;
    let p = basis_pencil(c.kind, c.operators, c.n, triangles, reference, c.potential.as_deref(), c.affine)?;
    let psi = basis(&p, c.k)?;
    let x = psi.vectors() * c.coefficient_table();
    Ok(Decoded {
        vertices: (0..c.n).map(|r| [x[(r, 0)], x[(r, 1)], x[(r, 2)]]).collect(),
        triangles: triangles.to_vec(),
    })
}

/// Mass-weighted mean squared coordinate error `Σ A_x ‖x̂ − x‖² / Σ A_x`.
pub fn geometry_error(original: &TriMesh, decoded: &[Point3]) -> Result<f64> {
    if decoded.len() != original.n_vertices() {
        return Err(Error::Dimension { expected: original.n_vertices(), got: decoded.len() });
    }
    let a = assemble_mass(original, MassScheme::MixedVoronoi);
    let num: f64 = original
        .vertices()
        .iter()
        .zip(decoded)
        .zip(&a.values)
        .map(|((p, q), m)| m * (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>())
        .sum();
    Ok(num / a.total())
}

/// Where a rate–distortion sweep gets its potentials from.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSource {
    /// The same potential for every `k`.
    Fixed(Vec<f64>),
    /// Optimized for the coordinates at each `k`, starting from zero. The
    /// potential kept for the previous (smaller) `k` competes with the new
    /// one, which keeps the curve monotone.
    Optimized { max_iter: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdConfig {
    pub kind: BasisKind,
    /// Operator family of the `HOpt` basis.
    pub operators: Operators,
    pub potential: PotentialSource,
}

impl RdConfig {
    pub fn mhb() -> Self {
        Self { kind: BasisKind::Mhb, operators: Operators::Graph, potential: PotentialSource::Fixed(Vec::new()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RdRow {
    pub k: usize,
    pub bits: u64,
    pub bits_excluding_potential: u64,
    pub error: f64,
}

/// Potential that minimizes the coordinate reconstruction loss at `k`
/// for the given operator family.
pub fn optimized_compression_potential(mesh: &TriMesh, operators: Operators, k: usize, max_iter: usize) -> Result<Vec<f64>> {
    let n = mesh.n_vertices();
    if k + 1 >= n {
        return Ok(vec![0.0; n]);
    }
    let (stiffness, mass) = match operators {
        Operators::Graph => (graph_laplacian(n, mesh.triangles())?, DiagOperator::identity(n)),
        Operators::Cotangent => (assemble_stiffness(mesh)?, assemble_mass(mesh, MassScheme::MixedVoronoi)),
    };
    let mut problem = OptimizationProblem::new(positions(mesh), k);
    problem.geometric = operators == Operators::Cotangent;
    problem.m = Some(n.min((k + 20).max(crate::optim::DEFAULT_SPECTRAL_DIM)));
    problem.lbfgs.max_iter = max_iter;
    let (v, _) = optimize_potential_operators(&stiffness, &mass, &problem)?;
    Ok(v.scaled())
}

fn rd_row(mesh: &TriMesh, c: &CompressedMesh, triangles: &[[usize; 3]]) -> Result<RdRow> {
    let d = decode(c, triangles, Some(mesh))?;
    let b = c.bitrate();
    Ok(RdRow {
        k: c.k,
        bits: b.total(),
        bits_excluding_potential: b.excluding_potential(),
        error: geometry_error(mesh, &d.in_original_order(c.order.as_deref()))?,
    })
}

/// `(k, bits, error)` rows. Fixed-basis sweeps share one eigensolve.
pub fn rd_curve(mesh: &TriMesh, config: &RdConfig, ks: &[usize], qstep: f64) -> Result<Vec<RdRow>> {
    let n = mesh.n_vertices();
    check_qstep(qstep)?;
    for &k in ks {
        check_k(k, n)?;
    }
    let Some(&kmax) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    let fixed = match (&config.kind, &config.potential) {
        (BasisKind::Mhb, _) => Some(None),
        (_, PotentialSource::Fixed(v)) => Some(Some(v.as_slice())),
        _ => None,
    };
    if let Some(v) = fixed {
        let mode = match (config.kind, v) {
            (BasisKind::Mhb, _) => CompressionMode::Mhb,
            (BasisKind::HOpt, Some(v)) => CompressionMode::HOpt { potential: v.to_vec(), operators: config.operators },
            (BasisKind::HReordered, Some(v)) => CompressionMode::HReordered { potential: v.to_vec() },
            _ => unreachable!(),
        };
        let top = encode(mesh, &mode, kmax, qstep)?;
        let order = top.order.clone();
        let ordered = match &order {
            Some(o) => mesh.reorder(o)?,
            None => mesh.clone(),
        };
        let p = basis_pencil(top.kind, top.operators, n, ordered.triangles(), Some(&ordered), top.potential.as_deref(), top.affine)?;
        let full = basis(&p, kmax)?;
        return ks
            .iter()
            .map(|&k| {
                let mut c = encode_in_basis(&ordered, &full, top.kind, top.operators, k, qstep)?;
                c.potential = top.potential.clone();
                c.affine = top.affine;
                c.order = order.clone();
                rd_row_prebuilt(mesh, &c, &full)
            })
            .collect();
    }
    let PotentialSource::Optimized { max_iter } = config.potential else { unreachable!() };
    // Ascending k; a potential optimized for a smaller k stays a candidate,
    // since its nested basis can only improve with more columns.
    let mut idx: Vec<usize> = (0..ks.len()).collect();
    idx.sort_by_key(|&i| ks[i]);
    let ops = if config.kind == BasisKind::HReordered { Operators::Graph } else { config.operators };
    let row_for = |v: Vec<f64>, k: usize| -> Result<RdRow> {
        let mode = match config.kind {
            BasisKind::HReordered => CompressionMode::HReordered { potential: v },
            _ => CompressionMode::HOpt { potential: v, operators: config.operators },
        };
        let c = encode(mesh, &mode, k, qstep)?;
        let tris = transmitted_connectivity(mesh, &c)?;
        rd_row(mesh, &c, &tris)
    };
    let mut rows = vec![None; ks.len()];
    let mut carry: Option<Vec<f64>> = None;
    for i in idx {
        let k = ks[i];
        let v = optimized_compression_potential(mesh, ops, k, max_iter)?;
        let mut best = (row_for(v.clone(), k)?, v);
        if let Some(prev) = carry.take() {
            let r = row_for(prev.clone(), k)?;
            if r.error < best.0.error {
                best = (r, prev);
            }
        }
        rows[i] = Some(best.0);
        carry = Some(best.1);
    }
    Ok(rows.into_iter().map(|r| r.unwrap()).collect())
}

/// Row for a stream decoded with the encoder's own basis (identical to the
/// decoder's for a deterministic solver).
fn rd_row_prebuilt(mesh: &TriMesh, c: &CompressedMesh, full: &Spectrum) -> Result<RdRow> {
    let x = full.vectors().columns(0, c.k) * c.coefficient_table();
    let d = Decoded { vertices: (0..c.n).map(|r| [x[(r, 0)], x[(r, 1)], x[(r, 2)]]).collect(), triangles: Vec::new() };
    let b = c.bitrate();
    Ok(RdRow {
        k: c.k,
        bits: b.total(),
        bits_excluding_potential: b.excluding_potential(),
        error: geometry_error(mesh, &d.in_original_order(c.order.as_deref()))?,
    })
}

pub fn write_rd_csv<W: std::io::Write>(rows: &[RdRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "k,bits,bits_excluding_potential,error")?;
    for r in rows {
        writeln!(w, "{},{},{},{:?}", r.k, r.bits, r.bits_excluding_potential, r.error)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn full_basis_roundtrip() {
        let m = shapes::finger_plate(8, 6).unwrap();
        let c = encode(&m, &CompressionMode::Mhb, m.n_vertices(), 0.0).unwrap();
        let d = decode(&c, m.triangles(), None).unwrap();
        let err = m.vertices().iter().zip(&d.vertices).flat_map(|(p, q)| (0..3).map(move |i| (p[i] - q[i]).abs())).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn affine_fit_exact() {
        let v: Vec<f64> = (1..=10).map(|r| 2.5 * r as f64 - 1.0).collect();
        let (a, b) = fit_affine_ranks(&v);
        assert!((a - 2.5).abs() < 1e-12 && (b + 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_ties_by_index() {
        assert_eq!(potential_order(&[1.0, 0.0, 1.0, -2.0]), vec![3, 1, 0, 2]);
    }

    #[test]
    fn quantization_width() {
        let c = DMatrix::from_column_slice(1, 3, &[0.26, -0.74, 0.0]);
        match quantize(&c, 0.1).unwrap() {
            Coefficients::Quantized { values, width } => {
                assert_eq!(values, vec![3, -7, 0]);
                assert_eq!(width, 4);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = shapes::grid(4).unwrap();
        assert!(encode(&m, &CompressionMode::Mhb, 17, 0.0).is_err());
        assert!(encode(&m, &CompressionMode::Mhb, 3, -1.0).is_err());
        let bad = CompressionMode::HReordered { potential: vec![f64::NAN; 16] };
        assert!(encode(&m, &bad, 3, 0.0).is_err());
    }
}
