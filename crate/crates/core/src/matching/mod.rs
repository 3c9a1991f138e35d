//! Correspondence between two shapes: matching potentials, descriptor
//! nearest-neighbor maps, functional-map matrices and geodesic-error curves.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{solve_generalized, SolveOptions, Spectrum};
use crate::error::{invalid, Error, Result};
use crate::fem::{assemble_mass, mesh_pencil, MassScheme, PotentialField};
use crate::mesh::{graph_geodesics, shapes, TriMesh};
use crate::spectral::{wks, wks_default_schedule, DescriptorField};

/// Vertex map from a source mesh `M` onto a target mesh `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    /// `map[m]` is the target vertex of source vertex `m`.
    pub map: Vec<usize>,
    /// Descriptor distance of each match, when produced by matching.
    pub confidence: Option<Vec<f64>>,
    pub target_len: usize,
}

impl Correspondence {
    pub fn new(map: Vec<usize>, target_len: usize) -> Result<Self> {
        if let Some((m, &t)) = map.iter().enumerate().find(|(_, &t)| t >= target_len) {
            return invalid(format!("source vertex {m} maps to {t}, target has {target_len} vertices"));
        }
        Ok(Self { map, confidence: None, target_len })
    }

    pub fn identity(n: usize) -> Self {
        Self { map: (0..n).collect(), confidence: None, target_len: n }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn is_bijection(&self) -> bool {
        if self.map.len() != self.target_len {
            return false;
        }
        let mut seen = vec![false; self.target_len];
        self.map.iter().all(|&t| !std::mem::replace(&mut seen[t], true))
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_bijection() {
            return invalid("only a bijection can be inverted");
        }
        let mut inv = vec![0; self.target_len];
        for (m, &t) in self.map.iter().enumerate() {
            inv[t] = m;
        }
        Ok(Self { map: inv, confidence: None, target_len: self.map.len() })
    }

    /// Two columns `source target`, one match per line.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (m, t) in self.map.iter().enumerate() {
            writeln!(w, "{m} {t}")?;
        }
        Ok(())
    }
}

/// Reads a ground-truth map: either two columns `source target` (any order,
/// every source exactly once) or one column where line `i` holds the target
/// of source `i`. `#` starts a comment.
pub fn read_map<R: BufRead>(r: R, target_len: usize) -> Result<Correspondence> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut single: Vec<usize> = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let nums: Vec<usize> = body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|_| Error::Parse { line: ln + 1, msg: format!("bad index {s:?}") }))
            .collect::<Result<_>>()?;
        match nums.as_slice() {
            [t] if pairs.is_empty() => single.push(*t),
            [m, t] if single.is_empty() => pairs.push((*m, *t)),
            _ => return Err(Error::Parse { line: ln + 1, msg: "expected one or two indices, consistently".into() }),
        }
    }
    if !single.is_empty() {
        return Correspondence::new(single, target_len);
    }
    let n = pairs.len();
    let mut map = vec![usize::MAX; n];
    for (m, t) in pairs {
        if m >= n || map[m] != usize::MAX {
            return invalid(format!("source {m} is repeated or out of range"));
        }
        map[m] = t;
    }
    Correspondence::new(map, target_len)
}

/// `V(m) = max(A_M(m)/A_N(τ(m)), A_N(τ(m))/A_M(m))` with mixed-Voronoi areas.
pub fn area_distortion_potential(m: &TriMesh, n: &TriMesh, gt: &Correspondence) -> Result<PotentialField> {
    if gt.len() != m.n_vertices() || gt.target_len != n.n_vertices() {
        return Err(Error::Dimension { expected: m.n_vertices(), got: gt.len() });
    }
    let am = assemble_mass(m, MassScheme::MixedVoronoi);
    let an = assemble_mass(n, MassScheme::MixedVoronoi);
    let mut v = Vec::with_capacity(gt.len());
    for (i, &j) in gt.map.iter().enumerate() {
        let (a, b) = (am.values[i], an.values[j]);
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Degenerate(format!("zero vertex area at {i} -> {j}")));
        }
        v.push((a / b).max(b / a));
    }
    PotentialField::new(v)
}

/// `V = s - min s` with `s = (ψ₁+ψ₂+ψ₃+ψ₄)/‖ψ₁+ψ₂+ψ₃+ψ₄‖_A` (first four
/// nonconstant eigenfunctions). Input signs must already be resolved.
pub fn intrinsic_potential(lbo: &Spectrum) -> Result<PotentialField> {
    if lbo.k() < 5 {
        return invalid(format!("intrinsic potential needs 5 eigenpairs, got {}", lbo.k()));
    }
    let n = lbo.n();
    let mut s = vec![0.0; n];
    for i in 1..5 {
        for (a, b) in s.iter_mut().zip(lbo.vector(i)) {
            *a += b;
        }
    }
    let norm = s.iter().zip(lbo.mass()).map(|(a, m)| a * a * m).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("eigenfunction sum vanishes".into()));
    }
    let min = s.iter().copied().fold(f64::INFINITY, f64::min) / norm;
    PotentialField::new(s.iter().map(|a| a / norm - min).collect())
}

/// Multi-source graph-geodesic distance to the landmarks, optionally scaled
/// to `[0, 1]`.
pub fn landmark_potential(mesh: &TriMesh, landmarks: &[usize], normalize: bool) -> Result<PotentialField> {
    let d = graph_geodesics(mesh, landmarks)?;
    if !d.unreachable.is_empty() {
        return Err(Error::Degenerate(format!("{} vertices unreachable from the landmarks", d.unreachable.len())));
    }
    let mut v = d.distances;
    if normalize {
        let mx = v.iter().copied().fold(0.0, f64::max);
        if mx > 0.0 {
            v.iter_mut().for_each(|x| *x /= mx);
        }
    }
    PotentialField::new(v)
}

/// Euclidean nearest neighbor in descriptor space, ties to the lower index.
pub fn match_descriptors(src: &DescriptorField, dst: &DescriptorField) -> Result<Correspondence> {
    if src.dim() != dst.dim() {
        return Err(Error::Dimension { expected: src.dim(), got: dst.dim() });
    }
    if dst.n_vertices() == 0 {
        return invalid("empty target descriptor set");
    }
    let best: Vec<(usize, f64)> = src
        .values
        .par_iter()
        .map(|a| {
            let mut arg = 0;
            let mut min = f64::INFINITY;
            for (j, b) in dst.values.iter().enumerate() {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < min {
                    min = d;
                    arg = j;
                }
            }
            (arg, min.sqrt())
        })
        .collect();
    Ok(Correspondence {
        map: best.iter().map(|b| b.0).collect(),
        confidence: Some(best.iter().map(|b| b.1).collect()),
        target_len: dst.n_vertices(),
    })
}

pub const DIAMETER_SAMPLES: usize = 100;

/// Largest graph-geodesic distance from a seeded sample of source vertices.
pub fn estimate_diameter(mesh: &TriMesh, samples: usize, seed: u64) -> Result<f64> {
    let n = mesh.n_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, n, samples.clamp(1, n)).into_vec();
    let per: Vec<f64> = picks
        .par_iter()
        .map(|&s| graph_geodesics(mesh, &[s]).map(|d| d.max_finite()))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

pub const CURVE_STEPS: usize = 200;
pub const CURVE_MAX: f64 = 0.5;

/// Fraction of source vertices whose match lies within `r·diameter` of the
/// ground truth, for `r` on a uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
    pub diameter: f64,
    /// Normalized error per source vertex.
    #[serde(skip)]
    pub errors: Vec<f64>,
}

impl ErrorCurve {
    /// Fraction at the first grid threshold `≥ r`.
    pub fn at(&self, r: f64) -> f64 {
        match self.thresholds.iter().position(|&t| t >= r - 1e-12) {
            Some(i) => self.fractions[i],
            None => *self.fractions.last().unwrap_or(&1.0),
        }
    }

    /// Fraction of errors `≤ r` for an arbitrary `r`.
    pub fn fraction_within(&self, r: f64) -> f64 {
        self.errors.iter().filter(|&&e| e <= r).count() as f64 / self.errors.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "threshold,fraction")?;
        for (t, f) in self.thresholds.iter().zip(&self.fractions) {
            writeln!(w, "{t:?},{f:?}")?;
        }
        Ok(())
    }
}

/// Per-vertex target-mesh graph-geodesic error against the ground truth.
/// Matches onto a symmetric counterpart count as errors.
pub fn geodesic_errors(corr: &Correspondence, gt: &Correspondence, target: &TriMesh) -> Result<Vec<f64>> {
    if corr.len() != gt.len() {
        return Err(Error::Dimension { expected: gt.len(), got: corr.len() });
    }
    let n = target.n_vertices();
    if corr.target_len != n || gt.target_len != n {
        return Err(Error::Dimension { expected: n, got: corr.target_len });
    }
    // One Dijkstra per distinct ground-truth target.
    let mut by_target: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (m, &t) in gt.map.iter().enumerate() {
        by_target[t].push(m);
    }
    let groups: Vec<(usize, &Vec<usize>)> = by_target.iter().enumerate().filter(|(_, g)| !g.is_empty()).collect();
    let parts: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|(t, members)| {
            let d = graph_geodesics(target, &[*t])?;
            Ok(members.iter().map(|&m| (m, d.distances[corr.map[m]])).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; corr.len()];
    for (m, e) in parts.into_iter().flatten() {
        out[m] = e;
    }
    Ok(out)
}

pub fn geodesic_error_curve(corr: &Correspondence, gt: &Correspondence, target: &TriMesh, diameter: f64) -> Result<ErrorCurve> {
    if !(diameter > 0.0) || !diameter.is_finite() {
        return invalid(format!("diameter must be positive, got {diameter}"));
    }
    let errors: Vec<f64> = geodesic_errors(corr, gt, target)?.into_iter().map(|e| e / diameter).collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len().max(1) as f64;
    let thresholds: Vec<f64> = (0..=CURVE_STEPS).map(|s| CURVE_MAX * s as f64 / CURVE_STEPS as f64).collect();
    let fractions = thresholds
        .iter()
        .map(|&r| sorted.partition_point(|&e| e <= r) as f64 / total)
        .collect();
    Ok(ErrorCurve { thresholds, fractions, diameter, errors })
}

/// `C = Ψ_Nᵀ A_N Π Ψ_M` on eigenfunctions `1..k` (the ground state is
/// left out), with `Π` moving values from each source vertex to its image.
#[derive(Debug, Clone)]
pub struct FunctionalMap {
    pub c: DMatrix<f64>,
}

impl FunctionalMap {
    /// `Σ diag(C)² / Σ C²`.
    pub fn diagonality(&self) -> f64 {
        let total: f64 = self.c.iter().map(|x| x * x).sum();
        let diag: f64 = self.c.diagonal().iter().map(|x| x * x).sum();
        if total > 0.0 {
            diag / total
        } else {
            0.0
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for r in 0..self.c.nrows() {
            let row: Vec<String> = (0..self.c.ncols()).map(|c| format!("{:?}", self.c[(r, c)])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn functional_map(src: &Spectrum, dst: &Spectrum, gt: &Correspondence, k: usize) -> Result<FunctionalMap> {
    if k < 2 || src.k() < k || dst.k() < k {
        return invalid(format!("functional map needs k ≥ 2 and {k} eigenpairs on both shapes"));
    }
    if gt.len() != src.n() || gt.target_len != dst.n() {
        return Err(Error::Dimension { expected: src.n(), got: gt.len() });
    }
    let mut c = DMatrix::zeros(k - 1, k - 1);
    let an = dst.mass();
    for (m, &t) in gt.map.iter().enumerate() {
        let w = an[t];
        for i in 1..k {
            let a = dst.vector(i)[t] * w;
            for j in 1..k {
                c[(i - 1, j - 1)] += a * src.vector(j)[m];
            }
        }
    }
    Ok(FunctionalMap { c })
}

/// Flips signs of `dst` eigenfunctions so each correlates positively (under
/// the ground truth) with the same-index eigenfunction of `src`.
pub fn align_signs(src: &Spectrum, dst: &Spectrum, gt: &Correspondence) -> Result<Spectrum> {
    if gt.len() != src.n() || gt.target_len != dst.n() {
        return Err(Error::Dimension { expected: src.n(), got: gt.len() });
    }
    let k = src.k().min(dst.k());
    let mut v = dst.vectors().clone();
    for i in 0..k {
        let d: f64 = gt.map.iter().enumerate().map(|(m, &t)| src.vector(i)[m] * dst.vector(i)[t] * src.mass()[m]).sum();
        if d < 0.0 {
            v.column_mut(i).neg_mut();
        }
    }
    let mut out = Spectrum::from_parts(dst.values().to_vec(), v, dst.mass().to_vec())?;
    out.method = dst.method;
    out.tol = dst.tol;
    Ok(out)
}

/// Bumpy plate and a copy whose bump heights grow linearly over the right
/// half (×2.5 at the far end). Same connectivity, so the identity is the
/// ground truth; areas change only where the bumps are stretched.
pub fn stretched_bump_pair(nx: usize, ny: usize) -> Result<(TriMesh, TriMesh)> {
    let m = shapes::symmetric_plate(nx, ny)?;
    let verts = m
        .vertices()
        .iter()
        .map(|p| {
            let s = if p[0] > 1.0 { 1.0 + 1.5 * (p[0] - 1.0).min(1.0) } else { 1.0 };
            [p[0], p[1], p[2] * s]
        })
        .collect();
    let n = m.with_vertices(verts)?;
    Ok((m, n))
}

/// Moves a source-vertex potential onto the target through a bijection.
pub fn transport_potential(v: &PotentialField, gt: &Correspondence) -> Result<PotentialField> {
    if !gt.is_bijection() || gt.len() != v.len() {
        return invalid("potential transport needs a bijective ground truth on the potential's vertices");
    }
    let mut out = vec![0.0; gt.target_len];
    for (m, &t) in gt.map.iter().enumerate() {
        out[t] = v.values[m];
    }
    PotentialField::with_mu(out, v.mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOptions {
    /// Eigenpairs per shape for the descriptors.
    pub k: usize,
    /// Basis size of the functional map (eigenfunctions `1..k_map`).
    pub k_map: usize,
    pub wks_energies: usize,
    /// `None`: `λ_{k_map−1} / (max V − min V)` of the source Laplacian, which
    /// puts the potential's variation on the scale of the mapped band.
    pub mu: Option<f64>,
    pub diameter_seed: u64,
    pub solve: SolveOptions,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self { k: 30, k_map: 20, wks_energies: 100, mu: None, diameter_seed: 1, solve: SolveOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BasisRun {
    pub mu: f64,
    pub diagonality: f64,
    pub curve: ErrorCurve,
    #[serde(skip)]
    pub map: Correspondence,
    #[serde(skip)]
    pub fmap: FunctionalMap,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasisComparison {
    pub lbo: BasisRun,
    pub hamiltonian: BasisRun,
}

/// WKS matching and functional maps in the Laplacian basis and in the
/// Hamiltonian basis with `potential` (given on the source, transported to
/// the target through `gt`). Both shapes share the source's WKS schedule.
pub fn compare_bases(
    src: &TriMesh,
    dst: &TriMesh,
    gt: &Correspondence,
    potential: &PotentialField,
    opts: &ComparisonOptions,
) -> Result<BasisComparison> {
    if gt.len() != src.n_vertices() || gt.target_len != dst.n_vertices() {
        return Err(Error::Dimension { expected: src.n_vertices(), got: gt.len() });
    }
    let diameter = estimate_diameter(dst, DIAMETER_SAMPLES, opts.diameter_seed)?;
    let run = |mu: f64| -> Result<(BasisRun, Spectrum)> {
        let vs = PotentialField::with_mu(potential.values.clone(), mu)?;
        let vd = transport_potential(&vs, gt)?;
        let ss = solve_generalized(&mesh_pencil(src, &vs)?, opts.k, &opts.solve)?;
        let sd = solve_generalized(&mesh_pencil(dst, &vd)?, opts.k, &opts.solve)?;
        let fmap = functional_map(&ss, &sd, gt, opts.k_map)?;
        let (energies, sigma) = wks_default_schedule(&ss, opts.wks_energies)?;
        let map = match_descriptors(&wks(&ss, &energies, sigma)?, &wks(&sd, &energies, sigma)?)?;
        let curve = geodesic_error_curve(&map, gt, dst, diameter)?;
        Ok((BasisRun { mu, diagonality: fmap.diagonality(), curve, map, fmap }, ss))
    };
    let (lbo, lbo_spec) = run(0.0)?;
    let mu = match opts.mu {
        Some(mu) => mu,
        None => {
            let spread = potential.max() - potential.min();
            let lambda = lbo_spec.values()[opts.k_map.min(lbo_spec.k()) - 1];
            if spread > 0.0 { lambda / spread } else { 0.0 }
        }
    };
    let (hamiltonian, _) = run(mu)?;
    Ok(BasisComparison { lbo, hamiltonian })
}
