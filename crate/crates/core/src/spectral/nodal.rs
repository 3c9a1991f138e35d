use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Values with `|f| < NODAL_ZERO_BAND · max|f|` count as zeros.
pub const NODAL_ZERO_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NodalDecomposition {
    /// Sign per vertex: -1, 0 or +1.
    pub signs: Vec<i8>,
    /// Domain id per vertex, `0..count`.
    pub domain: Vec<usize>,
    pub count: usize,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Connected components of `{f > 0}` and `{f < 0}` over the mesh edge graph.
/// Zero-band vertices join every neighbouring domain, so touching domains
/// merge through them and the count never overestimates.
pub fn nodal_domains(mesh: &TriMesh, f: &[f64]) -> Result<NodalDecomposition> {
    let edges: Vec<(usize, usize)> = mesh.edges().iter().map(|e| (e.a, e.b)).collect();
    nodal_domains_graph(mesh.n_vertices(), &edges, f)
}

pub fn nodal_domains_graph(n: usize, edges: &[(usize, usize)], f: &[f64]) -> Result<NodalDecomposition> {
    if f.len() != n {
        return Err(Error::Dimension { expected: n, got: f.len() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("nodal input".into()));
    }
    let band = NODAL_ZERO_BAND * f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let signs: Vec<i8> = f
        .iter()
        .map(|&v| if v.abs() <= band { 0 } else if v > 0.0 { 1 } else { -1 })
        .collect();
    let mut dsu = Dsu((0..n).collect());
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::InvalidArgument(format!("edge ({a}, {b}) out of range")));
        }
        if signs[a] == signs[b] || signs[a] == 0 || signs[b] == 0 {
            dsu.union(a, b);
        }
    }
    let mut id = vec![usize::MAX; n];
    let mut domain = vec![0; n];
    let mut count = 0;
    for v in 0..n {
        let r = dsu.find(v);
        if id[r] == usize::MAX {
            id[r] = count;
            count += 1;
        }
        domain[v] = id[r];
    }
    Ok(NodalDecomposition { signs, domain, count })
}
