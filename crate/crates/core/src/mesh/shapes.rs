//! Deterministic mesh generators used by tests, the acceptance suite and the
//! bundled data files.

use std::collections::HashMap;

use super::{cross, dot, sub, Interval, Point3, TriMesh};
use crate::error::{invalid, Result};

/// Unit square sampled on an `m × m` lattice, two triangles per cell with all
/// diagonals running from `(i, j)` to `(i + 1, j + 1)`.
pub fn grid(m: usize) -> Result<TriMesh> {
    rect_grid(m, m, 1.0, 1.0, false)
}

/// `nx × ny` lattice on `[0, width] × [0, height]`.
///
/// With `mirrored` the diagonal direction flips in the right half so the
/// triangulation is symmetric under `x ↦ width - x` (exact when `nx` is odd).
pub fn rect_grid(nx: usize, ny: usize, width: f64, height: f64, mirrored: bool) -> Result<TriMesh> {
    if nx < 2 || ny < 2 {
        return invalid(format!("grid needs at least 2 samples per side, got {nx}×{ny}"));
    }
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = width * i as f64 / (nx - 1) as f64;
            let y = height * j as f64 / (ny - 1) as f64;
            vertices.push([x, y, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    let half = (nx - 1) / 2;
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if mirrored && i >= half {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            } else {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Vertex map of the reflection `x ↦ width - x` on a [`rect_grid`] lattice.
pub fn rect_grid_mirror(nx: usize, ny: usize) -> Vec<usize> {
    let mut map = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            map.push(j * nx + (nx - 1 - i));
        }
    }
    map
}

/// 1-D chain of `n` samples on `[0, 1]`.
pub fn interval(n: usize) -> Result<Interval> {
    Interval::new(n)
}

/// Same connectivity, `z` displaced by `f(x, y)`.
pub fn height_field(base: &TriMesh, f: impl Fn(f64, f64) -> f64) -> Result<TriMesh> {
    let v = base.vertices().iter().map(|p| [p[0], p[1], f(p[0], p[1])]).collect();
    base.with_vertices(v)
}

/// Unit-radius icosphere obtained by `subdivisions` rounds of midpoint
/// subdivision of an icosahedron (12, 42, 162, 642, 2562, ... vertices).
pub fn icosphere(subdivisions: usize) -> Result<TriMesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = vec![
        [-1., t, 0.],
        [1., t, 0.],
        [-1., -t, 0.],
        [1., -t, 0.],
        [0., -1., t],
        [0., 1., t],
        [0., -1., -t],
        [0., 1., -t],
        [t, 0., -1.],
        [t, 0., 1.],
        [-t, 0., -1.],
        [-t, 0., 1.],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let normalize = |p: Point3| {
        let r = dot(&p, &p).sqrt();
        [p[0] / r, p[1] / r, p[2] / r]
    };
    for v in vertices.iter_mut() {
        *v = normalize(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[c] = *midpoint.entry(key).or_insert_with(|| {
                    let (pa, pb) = (vertices[a], vertices[b]);
                    vertices.push(normalize([
                        0.5 * (pa[0] + pb[0]),
                        0.5 * (pa[1] + pb[1]),
                        0.5 * (pa[2] + pb[2]),
                    ]));
                    vertices.len() - 1
                });
            }
            next.push([f[0], mids[0], mids[2]]);
            next.push([f[1], mids[1], mids[0]]);
            next.push([f[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        faces = next;
    }
    TriMesh::new(vertices, faces)
}

/// Closed surface of the cube `[-1/2, 1/2]³`, each face an `m × m` lattice,
/// outward oriented. A shape with sharp creases and corners.
pub fn cube(m: usize) -> Result<TriMesh> {
    if m < 2 {
        return invalid(format!("cube needs at least 2 samples per edge, got {m}"));
    }
    let s = (m - 1) as i64;
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles = Vec::new();
    let mut vid = |key: [i64; 3], vertices: &mut Vec<Point3>| {
        *index.entry(key).or_insert_with(|| {
            vertices.push([
                key[0] as f64 / s as f64 - 0.5,
                key[1] as f64 / s as f64 - 0.5,
                key[2] as f64 / s as f64 - 0.5,
            ]);
            vertices.len() - 1
        })
    };
    for axis in 0..3 {
        for side in [0, s] {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut outward = [0.0; 3];
            outward[axis] = if side == 0 { -1.0 } else { 1.0 };
            for j in 0..s {
                for i in 0..s {
                    let key = |di: i64, dj: i64| {
                        let mut k = [0i64; 3];
                        k[axis] = side;
                        k[u] = i + di;
                        k[v] = j + dj;
                        k
                    };
                    let q = [
                        vid(key(0, 0), &mut vertices),
                        vid(key(1, 0), &mut vertices),
                        vid(key(1, 1), &mut vertices),
                        vid(key(0, 1), &mut vertices),
                    ];
                    for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
                        let nrm = cross(
                            &sub(&vertices[tri[1]], &vertices[tri[0]]),
                            &sub(&vertices[tri[2]], &vertices[tri[0]]),
                        );
                        if dot(&nrm, &outward) < 0.0 {
                            triangles.push([tri[0], tri[2], tri[1]]);
                        } else {
                            triangles.push(tri);
                        }
                    }
                }
            }
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Hand-like plate: a rectangular lattice lifted into four sharp
/// tent-shaped ridges ("fingers") over its upper part.
pub fn finger_plate(nx: usize, ny: usize) -> Result<TriMesh> {
    let base = rect_grid(nx, ny, 1.0, 1.0, false)?;
    height_field(&base, |x, y| {
        let reach = ((y - 0.35) / 0.1).clamp(0.0, 1.0);
        let ridge: f64 = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .map(|&c| (1.0 - (x - c).abs() / 0.07).max(0.0))
            .fold(0.0, f64::max);
        0.15 * reach * ridge
    })
}

/// Bilaterally symmetric bumpy plate on `[0, 2] × [0, 1]` (mirror `x ↦ 2 - x`),
/// with two "legs" (bumps) at each end. `nx` should be odd.
pub fn symmetric_plate(nx: usize, ny: usize) -> Result<TriMesh> {
    let base = rect_grid(nx, ny, 2.0, 1.0, true)?;
    height_field(&base, |x, y| {
        let xs = (x - 1.0).abs();
        let bump = |cx: f64, cy: f64, r: f64| {
            let d2 = (xs - cx).powi(2) + (y - cy).powi(2);
            (-d2 / (r * r)).exp()
        };
        0.25 * bump(0.6, 0.25, 0.18) + 0.2 * bump(0.6, 0.75, 0.18) + 0.1 * bump(0.0, 0.5, 0.3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        for m in 2..8 {
            let g = grid(m).unwrap();
            assert_eq!(g.n_vertices(), m * m);
            assert_eq!(g.n_triangles(), 2 * (m - 1) * (m - 1));
            assert!((g.total_area() - 1.0).abs() < 1e-12);
        }
        assert!(grid(1).is_err());
    }

    #[test]
    fn icosphere_counts_and_closed() {
        let s = icosphere(2).unwrap();
        assert_eq!(s.n_vertices(), 162);
        assert_eq!(s.n_triangles(), 320);
        assert_eq!(s.boundary_edge_count(), 0);
        // Euler characteristic of the sphere.
        let chi = s.n_vertices() as i64 - s.edges().len() as i64 + s.n_triangles() as i64;
        assert_eq!(chi, 2);
    }

    #[test]
    fn cube_closed_with_area_six() {
        let c = cube(5).unwrap();
        assert_eq!(c.boundary_edge_count(), 0);
        assert_eq!(c.n_vertices(), 6 * 25 - 12 * 5 + 8);
        assert!((c.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn mirrored_grid_is_symmetric() {
        let (nx, ny) = (7, 4);
        let g = rect_grid(nx, ny, 2.0, 1.0, true).unwrap();
        let map = rect_grid_mirror(nx, ny);
        let mut tris: Vec<[usize; 3]> = g
            .triangles()
            .iter()
            .map(|t| {
                let mut m = [map[t[0]], map[t[1]], map[t[2]]];
                m.sort_unstable();
                m
            })
            .collect();
        let mut orig: Vec<[usize; 3]> = g
            .triangles()
            .iter()
            .map(|t| {
                let mut s = *t;
                s.sort_unstable();
                s
            })
            .collect();
        tris.sort_unstable();
        orig.sort_unstable();
        assert_eq!(tris, orig);
    }
}
