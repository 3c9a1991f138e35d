//! Envelope (profile) Cholesky factorization with reverse Cuthill–McKee
//! ordering. Mesh operators have a small profile after RCM, which keeps the
//! factor compact enough for repeated shift-invert solves.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::fem::SparseSymOperator;

/// Reverse Cuthill–McKee ordering of the sparsity graph. Returns `order`
/// with `order[new] = old`.
pub fn rcm_order(m: &SparseSymOperator) -> Vec<usize> {
    let n = m.dim();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| m.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = neighbors.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last = |start: usize, visited: &[bool]| -> usize {
        // Farthest vertex from `start` (lowest degree among the last level).
        let mut seen = visited.to_vec();
        let mut level = vec![start];
        seen[start] = true;
        loop {
            let mut next = Vec::new();
            for &v in &level {
                for &w in &neighbors[v] {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                return *level.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            }
            level = next;
        }
    };
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &s in &by_degree {
        if visited[s] {
            continue;
        }
        // Two sweeps towards a pseudo-peripheral start vertex.
        let start = bfs_last(bfs_last(s, &visited), &visited);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = neighbors[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `P K Pᵀ = L Lᵀ` with `L` stored row-wise over each row's envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    order: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `m + shift·diag(d)` (or `m` when `diag_shift` is `None`).
    pub fn factor(m: &SparseSymOperator, diag_shift: Option<(f64, &[f64])>) -> Result<Self> {
        let order = rcm_order(m);
        Self::factor_with_order(m, diag_shift, order)
    }

    pub fn factor_with_order(m: &SparseSymOperator, diag_shift: Option<(f64, &[f64])>, order: Vec<usize>) -> Result<Self> {
        let n = m.dim();
        let mut new_of_old = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in order.iter().enumerate() {
            for (j, _) in m.row(old) {
                let nj = new_of_old[j];
                if nj < first[new] {
                    first[new] = nj;
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offsets[n]];
        for (new, &old) in order.iter().enumerate() {
            for (j, v) in m.row(old) {
                let nj = new_of_old[j];
                if nj <= new {
                    data[offsets[new] + nj - first[new]] += v;
                }
            }
            if let Some((s, d)) = diag_shift {
                data[offsets[new] + new - first[new]] += s * d[old];
            }
        }

        for i in 0..n {
            let fi = first[i];
            let oi = offsets[i];
            for j in fi..i {
                let fj = first[j];
                let oj = offsets[j];
                let start = fi.max(fj);
                let mut s = data[oi + j - fi];
                let ri = &data[oi + start - fi..oi + j - fi];
                let rj = &data[oj + start - fj..oj + j - fj];
                s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                let ljj = data[oj + j - fj];
                data[oi + j - fi] = s / ljj;
            }
            let row = &data[oi..oi + i - fi];
            let d = data[oi + i - fi] - row.iter().map(|a| a * a).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            data[oi + i - fi] = d.sqrt();
        }
        Ok(Self { order, first, offsets, data })
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    /// Number of stored factor entries.
    pub fn profile(&self) -> usize {
        self.data.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let mut y: Vec<f64> = self.order.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offsets[i];
            let row = &self.data[oi..oi + i - fi];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.data[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let oi = self.offsets[i];
            y[i] /= self.data[oi + i - fi];
            let yi = y[i];
            let row = &self.data[oi..oi + i - fi];
            for (yk, l) in y[fi..i].iter_mut().zip(row) {
                *yk -= l * yi;
            }
        }
        for (new, &old) in self.order.iter().enumerate() {
            b[old] = y[new];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, MassScheme};
    use crate::mesh::shapes;

    #[test]
    fn solves_shifted_laplacian() {
        let m = shapes::finger_plate(13, 11).unwrap();
        let w = assemble_stiffness(&m).unwrap();
        let a = assemble_mass(&m, MassScheme::MixedVoronoi);
        let f = EnvelopeCholesky::factor(&w, Some((0.3, &a.values))).unwrap();
        let k = w.add_diagonal(&a.values.iter().map(|x| 0.3 * x).collect::<Vec<_>>()).unwrap();
        let b: Vec<f64> = (0..m.n_vertices()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let x = f.solve(&b);
        let r = k.apply(&x);
        let err = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn rcm_is_permutation_and_reduces_profile() {
        let m = shapes::icosphere(3).unwrap();
        let w = assemble_stiffness(&m).unwrap();
        let mut o = rcm_order(&w);
        let rcm = EnvelopeCholesky::factor(&w, Some((1.0, &vec![1.0; m.n_vertices()]))).unwrap();
        let natural = EnvelopeCholesky::factor_with_order(&w, Some((1.0, &vec![1.0; m.n_vertices()])), (0..m.n_vertices()).collect()).unwrap();
        assert!(rcm.profile() < natural.profile());
        o.sort_unstable();
        assert_eq!(o, (0..m.n_vertices()).collect::<Vec<_>>());
    }

    #[test]
    fn singular_is_reported() {
        let m = shapes::grid(4).unwrap();
        let w = assemble_stiffness(&m).unwrap();
        let w = w.add_diagonal(&vec![-1.0; 16]).unwrap();
        assert!(matches!(EnvelopeCholesky::factor(&w, None), Err(Error::NotPositiveDefinite { .. })));
    }
}
