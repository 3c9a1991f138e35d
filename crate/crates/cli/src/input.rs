//! Mesh, interval, potential and function arguments given on the command line.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use hamspec::fem::{assemble_interval, assemble_mass, assemble_stiffness, mesh_pencil, MassScheme};
use hamspec::mesh::{io, shapes, Interval};
use hamspec::{DiagOperator, Pencil, PotentialField, SparseSymOperator, TriMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(msg.into())
}

/// `--mesh` accepts a file (OFF/OBJ/PLY), a bundled name (`hand_plate`,
/// `sphere`, ...) or a generator: `grid:M`, `finger:NX,NY`,
/// `symmetric:NX,NY`, `sphere:S`, `cube:M`.
pub fn load_mesh(spec: &str) -> Result<TriMesh> {
    if io::BUNDLED.contains(&spec) {
        return Ok(io::bundled(spec)?);
    }
    if let Some((kind, params)) = spec.split_once(':') {
        let nums: std::result::Result<Vec<usize>, _> = params.split(',').map(|s| s.trim().parse::<usize>()).collect();
        let generated = match (kind, nums) {
            ("grid", Ok(n)) if n.len() == 1 => Some(shapes::grid(n[0])),
            ("finger", Ok(n)) if n.len() == 2 => Some(shapes::finger_plate(n[0], n[1])),
            ("symmetric", Ok(n)) if n.len() == 2 => Some(shapes::symmetric_plate(n[0], n[1])),
            ("sphere", Ok(n)) if n.len() == 1 => Some(shapes::icosphere(n[0])),
            ("cube", Ok(n)) if n.len() == 1 => Some(shapes::cube(n[0])),
            ("grid" | "finger" | "symmetric" | "sphere" | "cube", _) => bail!("bad generator parameters in {spec:?}"),
            _ => None,
        };
        if let Some(m) = generated {
            return Ok(m?);
        }
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("mesh input {spec:?} is neither a file, a bundled mesh ({}) nor a generator", io::BUNDLED.join(", "));
    }
    io::load(path).with_context(|| format!("loading {spec}"))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DomainArgs {
    /// Mesh file, bundled name or generator spec.
    #[arg(long)]
    pub mesh: Option<String>,
    /// Uniform 1-D interval [0, 1] with this many samples.
    #[arg(long)]
    pub interval: Option<usize>,
}

pub enum Domain {
    Mesh(TriMesh),
    Interval(Interval),
}

impl DomainArgs {
    pub fn resolve(&self) -> Result<Domain> {
        match (&self.mesh, self.interval) {
            (Some(m), None) => Ok(Domain::Mesh(load_mesh(m)?)),
            (None, Some(n)) => Ok(Domain::Interval(Interval::new(n)?)),
            (Some(_), Some(_)) => bail!("give either --mesh or --interval, not both"),
            (None, None) => bail!("missing input: --mesh or --interval"),
        }
    }

    pub fn resolve_mesh(&self) -> Result<TriMesh> {
        match self.resolve()? {
            Domain::Mesh(m) => Ok(m),
            Domain::Interval(_) => bail!("this command needs a triangle mesh (--mesh)"),
        }
    }
}

impl Domain {
    pub fn n(&self) -> usize {
        match self {
            Domain::Mesh(m) => m.n_vertices(),
            Domain::Interval(i) => i.len(),
        }
    }

    pub fn mesh(&self) -> Option<&TriMesh> {
        match self {
            Domain::Mesh(m) => Some(m),
            Domain::Interval(_) => None,
        }
    }

    /// Vertex positions; interval samples sit on the x axis.
    pub fn positions(&self) -> Vec<[f64; 3]> {
        match self {
            Domain::Mesh(m) => m.vertices().to_vec(),
            Domain::Interval(i) => i.points().iter().map(|&x| [x, 0.0, 0.0]).collect(),
        }
    }

    pub fn pencil(&self, potential: &PotentialField) -> Result<Pencil> {
        Ok(match self {
            Domain::Mesh(m) => mesh_pencil(m, potential)?,
            Domain::Interval(i) => assemble_interval(i, potential)?,
        })
    }

    /// Stiffness with the lumped mass, or the identity when `plain`.
    pub fn operators(&self, plain: bool) -> Result<(SparseSymOperator, DiagOperator)> {
        let (w, a) = match self {
            Domain::Mesh(m) => (assemble_stiffness(m)?, assemble_mass(m, MassScheme::MixedVoronoi)),
            Domain::Interval(i) => {
                let p = assemble_interval(i, &PotentialField::zeros(i.len()))?;
                (p.h, p.mass)
            }
        };
        Ok(if plain { (w, DiagOperator::identity(self.n())) } else { (w, a) })
    }

    /// Per-vertex values of a mesh channel.
    pub fn channel(&self, name: &str) -> Result<Vec<f64>> {
        let m = self.mesh().ok_or_else(|| usage("channels need a mesh"))?;
        m.channel(name).map(<[f64]>::to_vec).ok_or_else(|| usage(format!("mesh has no channel {name:?}")))
    }
}

/// One number per line; the last comma- or space-separated field of each
/// line is used, so `vertex,value` CSV works. `#` lines and a leading
/// non-numeric header are skipped.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(|c: char| c == ',' || c.is_whitespace()).next().unwrap_or("");
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() => continue,
            Err(_) => bail!("{}:{}: not a number: {field:?}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn axis(name: &str) -> Result<usize> {
    match name {
        "x" => Ok(0),
        "y" => Ok(1),
        "z" => Ok(2),
        _ => bail!("axis must be x, y or z, got {name:?}"),
    }
}

fn coordinate(domain: &Domain, axis: usize) -> Vec<f64> {
    domain.positions().iter().map(|p| p[axis]).collect()
}

fn check_len(values: Vec<f64>, n: usize, what: &str) -> Result<Vec<f64>> {
    if values.len() != n {
        bail!("{what}: expected {n} values, got {}", values.len());
    }
    Ok(values)
}

/// Vertex functions shared by potentials and test signals:
/// `coord:AXIS`, `file:PATH`, `channel:NAME`, `random[:MAX]` (uniform in
/// `[0, MAX]`).
pub fn vertex_function(spec: &str, domain: &Domain, seed: u64) -> Result<Vec<f64>> {
    let n = domain.n();
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "coord" => Ok(coordinate(domain, axis(arg)?)),
        "file" => check_len(read_values(Path::new(arg))?, n, arg),
        "channel" => domain.channel(arg),
        "random" => {
            let max = if arg.is_empty() { 1.0 } else { parse_f64(arg, spec)? };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n).map(|_| max * rng.random::<f64>()).collect())
        }
        _ => bail!("unknown function spec {spec:?}"),
    }
}

fn parse_f64(s: &str, spec: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| usage(format!("bad number {s:?} in {spec:?}")))
}

/// `zero`, `const:C`, `step:V0[:T]` (V0 where the normalized x coordinate
/// exceeds T, default 0.5), `coord:AXIS` (shifted to minimum 0), or any
/// [`vertex_function`] spec.
pub fn potential(spec: &str, domain: &Domain, mu: f64, seed: u64) -> Result<PotentialField> {
    let n = domain.n();
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or("");
    let values = match kind {
        "zero" => vec![0.0; n],
        "const" => vec![parse_f64(parts.next().unwrap_or(""), spec)?; n],
        "step" => {
            let v0 = parse_f64(parts.next().unwrap_or(""), spec)?;
            let t = parts.next().map(|s| parse_f64(s, spec)).transpose()?.unwrap_or(0.5);
            let x = coordinate(domain, 0);
            let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let span = (hi - lo).max(f64::MIN_POSITIVE);
            x.iter().map(|&v| if (v - lo) / span > t { v0 } else { 0.0 }).collect()
        }
        "coord" => {
            let c = vertex_function(spec, domain, seed)?;
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            c.iter().map(|v| v - lo).collect()
        }
        _ => vertex_function(spec, domain, seed)?,
    };
    Ok(PotentialField::with_mu(values, mu)?)
}
