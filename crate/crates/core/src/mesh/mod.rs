//! Triangle meshes and 1-D sample chains.
//!
//! A [`TriMesh`] is validated on construction: indices are in range, no
//! triangle repeats a vertex, every triangle has non-negligible area and
//! every edge is shared by at most two triangles. Once built it is immutable
//! apart from named per-vertex scalar channels.

mod geodesic;
pub mod io;
mod noise;
pub mod shapes;

pub use geodesic::{graph_geodesics, DistanceField};
pub use noise::{perturb_vertices, puncture_mesh, Punctured};

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Relative tolerance for degenerate triangles, in units of the squared
/// bounding-box diagonal.
pub const DEGENERATE_AREA_TOL: f64 = 1e-12;

pub type Point3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn distance(a: &Point3, b: &Point3) -> f64 {
    norm(&sub(a, b))
}

/// Undirected mesh edge with the number of incident triangles (1 = boundary).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub faces: u8,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    channels: BTreeMap<String, Vec<f64>>,
    edges: Vec<Edge>,
    adj_offsets: Vec<usize>,
    adj: Vec<usize>,
}

impl TriMesh {
    /// Builds and validates a mesh.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 {
            return Err(Error::Validation("mesh has no vertices".into()));
        }
        for (i, p) in vertices.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("vertex {i} has a non-finite coordinate")));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(Error::Validation(format!(
                        "triangle {t} references vertex {v} but the mesh has {n} vertices"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!("triangle {t} repeats a vertex: {tri:?}")));
            }
        }

        let diag2 = bbox_diagonal(&vertices).powi(2);
        let min_area = DEGENERATE_AREA_TOL * diag2;
        for (t, tri) in triangles.iter().enumerate() {
            let a = tri_area(&vertices, tri);
            if !(a > min_area) {
                return Err(Error::Validation(format!(
                    "triangle {t} is degenerate (area {a:.3e} below {min_area:.3e})"
                )));
            }
        }

        let mut counts: HashMap<(usize, usize), u8> = HashMap::with_capacity(triangles.len() * 2);
        for tri in &triangles {
            for c in 0..3 {
                let (i, j) = (tri[c], tri[(c + 1) % 3]);
                let key = (i.min(j), i.max(j));
                let e = counts.entry(key).or_insert(0);
                *e = e.saturating_add(1);
            }
        }
        let mut edges: Vec<Edge> = counts
            .into_iter()
            .map(|((a, b), faces)| Edge { a, b, faces })
            .collect();
        edges.sort_unstable_by_key(|e| (e.a, e.b));
        if let Some(e) = edges.iter().find(|e| e.faces > 2) {
            return Err(Error::Validation(format!(
                "edge ({}, {}) is shared by {} triangles",
                e.a, e.b, e.faces
            )));
        }

        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.a] += 1;
            degree[e.b] += 1;
        }
        let mut adj_offsets = Vec::with_capacity(n + 1);
        adj_offsets.push(0);
        for d in &degree {
            adj_offsets.push(adj_offsets.last().unwrap() + d);
        }
        let mut fill = adj_offsets[..n].to_vec();
        let mut adj = vec![0usize; adj_offsets[n]];
        for e in &edges {
            adj[fill[e.a]] = e.b;
            fill[e.a] += 1;
            adj[fill[e.b]] = e.a;
            fill[e.b] += 1;
        }
        for v in 0..n {
            adj[adj_offsets[v]..adj_offsets[v + 1]].sort_unstable();
        }

        Ok(Self { vertices, triangles, channels: BTreeMap::new(), edges, adj_offsets, adj })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Sorted neighbour list of vertex `v` in the edge graph.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.adj_offsets[v]..self.adj_offsets[v + 1]]
    }

    pub fn channels(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn set_channel(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_vertices() {
            return Err(Error::Dimension { expected: self.n_vertices(), got: values.len() });
        }
        self.channels.insert(name.into(), values);
        Ok(())
    }

    pub fn with_channel(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.set_channel(name, values)?;
        Ok(self)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        tri_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        distance(&self.vertices[a], &self.vertices[b])
    }

    pub fn mean_edge_length(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges.iter().map(|e| self.edge_length(e.a, e.b)).sum::<f64>() / self.edges.len() as f64
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.faces == 1).count()
    }

    /// Coordinates as an `n × 3` row-major table.
    pub fn coordinate_columns(&self) -> [Vec<f64>; 3] {
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        for p in &self.vertices {
            for c in 0..3 {
                cols[c].push(p[c]);
            }
        }
        cols
    }

    /// Same connectivity with new positions (re-validated).
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.n_vertices() {
            return Err(Error::Dimension { expected: self.n_vertices(), got: vertices.len() });
        }
        let mut m = TriMesh::new(vertices, self.triangles.clone())?;
        m.channels = self.channels.clone();
        Ok(m)
    }

    /// Relabels vertices so that new vertex `i` is old vertex `order[i]`.
    /// Triangles keep their order; channels are permuted alongside.
    pub fn reorder(&self, order: &[usize]) -> Result<Self> {
        let n = self.n_vertices();
        if order.len() != n {
            return Err(Error::Dimension { expected: n, got: order.len() });
        }
        let mut new_of_old = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || new_of_old[old] != usize::MAX {
                return Err(Error::InvalidArgument("order is not a permutation".into()));
            }
            new_of_old[old] = new;
        }
        let vertices = order.iter().map(|&o| self.vertices[o]).collect();
        let triangles = self
            .triangles
            .iter()
            .map(|t| [new_of_old[t[0]], new_of_old[t[1]], new_of_old[t[2]]])
            .collect();
        let mut m = TriMesh::new(vertices, triangles)?;
        for (name, vals) in &self.channels {
            m.channels.insert(name.clone(), order.iter().map(|&o| vals[o]).collect());
        }
        Ok(m)
    }

    /// Connected components of the edge graph, as a component id per vertex.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.n_vertices();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &w in self.neighbors(v) {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }
}

pub(crate) fn tri_area(vertices: &[Point3], tri: &[usize; 3]) -> f64 {
    let p = &vertices[tri[0]];
    let e1 = sub(&vertices[tri[1]], p);
    let e2 = sub(&vertices[tri[2]], p);
    0.5 * norm(&cross(&e1, &e2))
}

fn bbox_diagonal(vertices: &[Point3]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in vertices {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    distance(&lo, &hi)
}

/// Uniformly sampled 1-D interval `[0, 1]`, used as a path graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    points: Vec<f64>,
}

impl Interval {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("interval needs at least 2 samples, got {n}")));
        }
        let h = 1.0 / (n - 1) as f64;
        Ok(Self { points: (0..n).map(|i| i as f64 * h).collect() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points.len() - 1) as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}
