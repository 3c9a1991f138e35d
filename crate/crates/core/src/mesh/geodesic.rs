use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::TriMesh;
use crate::error::{Error, Result};

/// Shortest-path distances over the edge graph from a set of sources.
///
/// Edge-graph Dijkstra overestimates true surface geodesics (paths are
/// restricted to mesh edges) but is exact for the graph and deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub sources: Vec<usize>,
    pub distances: Vec<f64>,
    /// Vertices not reachable from any source; their distance is `+∞`.
    pub unreachable: Vec<usize>,
}

impl DistanceField {
    pub fn max_finite(&self) -> f64 {
        self.distances.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max)
    }
}

#[derive(PartialEq)]
struct Item {
    dist: f64,
    vertex: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra with Euclidean edge lengths.
pub fn graph_geodesics(mesh: &TriMesh, sources: &[usize]) -> Result<DistanceField> {
    let n = mesh.n_vertices();
    if sources.is_empty() {
        return Err(Error::InvalidArgument("geodesics need at least one source".into()));
    }
    if let Some(&s) = sources.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidArgument(format!("source {s} out of range for {n} vertices")));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Item { dist: 0.0, vertex: s });
    }
    while let Some(Item { dist: d, vertex: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &w in mesh.neighbors(v) {
            let nd = d + mesh.edge_length(v, w);
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Item { dist: nd, vertex: w });
            }
        }
    }
    let unreachable = (0..n).filter(|&v| dist[v].is_infinite()).collect();
    let mut sources = sources.to_vec();
    sources.sort_unstable();
    sources.dedup();
    Ok(DistanceField { sources, distances: dist, unreachable })
}
