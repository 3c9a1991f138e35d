use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric sparse matrix stored as full CSR (both triangles present),
/// columns sorted within each row and the diagonal always stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymOperator {
    /// Assembles from `(row, col, value)` entries; duplicates are summed.
    /// Every entry `(i, j, v)` with `i != j` is mirrored to `(j, i, v)`, so
    /// callers pass each off-diagonal coupling once.
    pub fn from_upper_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut full: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len() * 2 + n);
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("entry ({i}, {j}) outside {n}×{n}")));
            }
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        for i in 0..n {
            full.push((i, i, 0.0));
        }
        // Stable sort keeps summation order deterministic.
        full.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(full.len());
        let mut values: Vec<f64> = Vec::with_capacity(full.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in full {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Dimension { expected: n, got: m.ncols() });
        }
        let mut e = Vec::new();
        for i in 0..n {
            for j in i..n {
                if m[(i, j)] != 0.0 {
                    e.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_upper_triplets(n, &e)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Same pattern with `d` added to the diagonal.
    pub fn add_diagonal(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: d.len() });
        }
        let mut out = self.clone();
        for (i, di) in d.iter().enumerate() {
            let r = out.row_ptr[i]..out.row_ptr[i + 1];
            let p = out.col_idx[r.clone()].binary_search(&i).expect("diagonal is always stored");
            out.values[r.start + p] += di;
        }
        Ok(out)
    }

    /// `a·self + b·other`; patterns are merged.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::Dimension { expected: self.n, got: other.n });
        }
        let mut e = Vec::with_capacity(self.nnz() + other.nnz());
        for (m, s) in [(self, a), (other, b)] {
            for i in 0..m.n {
                for (j, v) in m.row(i) {
                    if j >= i {
                        e.push((i, j, s * v));
                    }
                }
            }
        }
        Self::from_upper_triplets(self.n, &e)
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..self.n {
                let mut s = 0.0;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.values[p] * col[self.col_idx[p]];
                }
                y[(i, c)] = s;
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let y = self.apply(x);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// All stored entries `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Writes one `row col value` line per stored entry.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:?}")?;
        }
        Ok(())
    }

    pub fn sparsity_pattern(&self) -> (&[usize], &[usize]) {
        (&self.row_ptr, &self.col_idx)
    }
}

/// Diagonal operator (lumped mass or a potential on the diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct DiagOperator {
    pub values: Vec<f64>,
}

impl DiagOperator {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn identity(n: usize) -> Self {
        Self { values: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `fᵀ D g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.values.iter().zip(f).zip(g).map(|((d, a), b)| d * a * b).sum()
    }

    pub fn as_sparse(&self) -> SparseSymOperator {
        let e: Vec<_> = self.values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SparseSymOperator::from_upper_triplets(self.dim(), &e).expect("diagonal entries are in range")
    }

    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i} {i} {v:?}")?;
        }
        Ok(())
    }
}
