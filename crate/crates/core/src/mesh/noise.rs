//! Geometric and topological noise models.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::TriMesh;
use crate::error::{invalid, Error, Result};

/// Displaces every vertex by i.i.d. Gaussian noise with standard deviation
/// `sigma_fraction × mean edge length` per coordinate.
///
/// Noise that produces degenerate triangles is reported as a validation error.
pub fn perturb_vertices(mesh: &TriMesh, sigma_fraction: f64, seed: u64) -> Result<TriMesh> {
    if !(sigma_fraction >= 0.0) || !sigma_fraction.is_finite() {
        return invalid(format!("sigma_fraction must be finite and non-negative, got {sigma_fraction}"));
    }
    if sigma_fraction == 0.0 {
        return Ok(mesh.clone());
    }
    let sigma = sigma_fraction * mesh.mean_edge_length();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = mesh
        .vertices()
        .iter()
        .map(|p| {
            [
                p[0] + normal.sample(&mut rng),
                p[1] + normal.sample(&mut rng),
                p[2] + normal.sample(&mut rng),
            ]
        })
        .collect();
    mesh.with_vertices(vertices)
}

/// Result of [`puncture_mesh`].
#[derive(Debug, Clone)]
pub struct Punctured {
    pub mesh: TriMesh,
    /// `old_of_new[i]` is the original index of surviving vertex `i`.
    pub old_of_new: Vec<usize>,
    /// `new_of_old[v]` is the new index of original vertex `v`, if it survived.
    pub new_of_old: Vec<Option<usize>>,
    pub removed_area_fraction: f64,
    pub components: usize,
}

/// Fraction of the total area aimed for by a single hole.
const HOLE_AREA: f64 = 0.01;

/// Removes small clusters of triangles (grown breadth-first around random
/// seed triangles) until at least `area_fraction` of the area is gone.
///
/// Removal stops at the first triangle that reaches the target, so the
/// removed area exceeds the request by less than one triangle.
pub fn puncture_mesh(mesh: &TriMesh, area_fraction: f64, seed: u64) -> Result<Punctured> {
    if !(0.0..1.0).contains(&area_fraction) {
        return invalid(format!("area_fraction must lie in [0, 1), got {area_fraction}"));
    }
    let n = mesh.n_vertices();
    let nt = mesh.n_triangles();
    if area_fraction == 0.0 {
        return Ok(Punctured {
            mesh: mesh.clone(),
            old_of_new: (0..n).collect(),
            new_of_old: (0..n).map(Some).collect(),
            removed_area_fraction: 0.0,
            components: mesh.components().1,
        });
    }

    let areas: Vec<f64> = (0..nt).map(|t| mesh.triangle_area(t)).collect();
    let total: f64 = areas.iter().sum();
    let target = area_fraction * total;

    // Triangle adjacency through shared edges.
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for c in 0..3 {
            let (a, b) = (tri[c], tri[(c + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut tri_adj = vec![Vec::new(); nt];
    for ts in by_edge.values() {
        if let [a, b] = ts[..] {
            tri_adj[a].push(b);
            tri_adj[b].push(a);
        }
    }
    for a in tri_adj.iter_mut() {
        a.sort_unstable();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alive = vec![true; nt];
    let mut n_alive = nt;
    let mut removed = 0.0;
    let mut queue = VecDeque::new();
    'outer: while removed < target {
        if n_alive == 0 {
            break;
        }
        let mut seed_tri = rng.random_range(0..nt);
        while !alive[seed_tri] {
            seed_tri = (seed_tri + 1) % nt;
        }
        let mut hole = 0.0;
        let mut queued = vec![false; nt];
        queue.clear();
        queue.push_back(seed_tri);
        queued[seed_tri] = true;
        while let Some(t) = queue.pop_front() {
            if !alive[t] {
                continue;
            }
            alive[t] = false;
            n_alive -= 1;
            removed += areas[t];
            hole += areas[t];
            if removed >= target {
                break 'outer;
            }
            if hole >= HOLE_AREA * total {
                break;
            }
            for &u in &tri_adj[t] {
                if alive[u] && !queued[u] {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    if n_alive == 0 {
        return Err(Error::Validation("puncturing removed every triangle".into()));
    }

    let mut used = vec![false; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if alive[t] {
            for &v in tri {
                used[v] = true;
            }
        }
    }
    let mut new_of_old = vec![None; n];
    let mut old_of_new = Vec::new();
    for v in 0..n {
        if used[v] {
            new_of_old[v] = Some(old_of_new.len());
            old_of_new.push(v);
        }
    }
    let vertices = old_of_new.iter().map(|&v| mesh.vertices()[v]).collect();
    let triangles = mesh
        .triangles()
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(t, _)| t.map(|v| new_of_old[v].unwrap()))
        .collect();
    let mut out = TriMesh::new(vertices, triangles)?;
    for (name, vals) in mesh.channels() {
        out.set_channel(name.clone(), old_of_new.iter().map(|&v| vals[v]).collect())?;
    }
    let components = out.components().1;
    Ok(Punctured { mesh: out, old_of_new, new_of_old, removed_area_fraction: removed / total, components })
}
