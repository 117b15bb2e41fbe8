//! Compressed sparse row matrices with element-driven sparsity patterns, and
//! a thin wrapper over the sparse Cholesky factorization.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat, Side};

use crate::error::{Error, Result};

pub const UNUSED: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Pattern from element connectivity: every row index of an element
    /// couples with every column index of the same element. `UNUSED` entries
    /// are skipped.
    pub fn from_elements<'a, R, C>(
        n_rows: usize,
        n_cols: usize,
        n_elements: usize,
        rows_of: R,
        cols_of: C,
    ) -> Self
    where
        R: Fn(usize, &mut Vec<usize>) + 'a,
        C: Fn(usize, &mut Vec<usize>) + 'a,
    {
        // row -> elements
        let mut count = vec![0usize; n_rows + 1];
        let mut buf = Vec::new();
        for t in 0..n_elements {
            buf.clear();
            rows_of(t, &mut buf);
            for &r in &buf {
                if r != UNUSED {
                    count[r + 1] += 1;
                }
            }
        }
        for i in 0..n_rows {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut elems = vec![0usize; count[n_rows]];
        for t in 0..n_elements {
            buf.clear();
            rows_of(t, &mut buf);
            for &r in &buf {
                if r != UNUSED {
                    elems[fill[r]] = t;
                    fill[r] += 1;
                }
            }
        }
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        let mut cols = Vec::new();
        let mut row = Vec::new();
        for r in 0..n_rows {
            row.clear();
            for &t in &elems[count[r]..count[r + 1]] {
                cols.clear();
                cols_of(t, &mut cols);
                row.extend(cols.iter().copied().filter(|&c| c != UNUSED));
            }
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(&row);
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            data: vec![0.0; nnz],
        }
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        let k = self.indices[lo..hi]
            .binary_search(&c)
            .expect("entry outside the sparsity pattern");
        self.data[lo + k] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        match self.indices[lo..hi].binary_search(&c) {
            Ok(k) => self.data[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_into(x, &mut y);
        y
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    /// `y = Aᵀ x`.
    pub fn mul_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * xr;
            }
        }
        y
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                m[(r, self.indices[k])] += self.data[k];
            }
        }
        m
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                worst = worst.max((self.data[k] - self.get(c, r)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// Coordinate text export: one "i j value" line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                s.push_str(&format!("{} {} {:?}\n", r, self.indices[k], self.data[k]));
            }
        }
        s
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct Cholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl std::fmt::Debug for Cholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Cholesky(n = {})", self.n)
    }
}

impl Cholesky {
    pub fn new(a: &Csr, what: &str) -> Result<Self> {
        faer::set_global_parallelism(faer::Par::Seq);
        assert_eq!(a.n_rows, a.n_cols);
        // a symmetric CSR matrix is its own CSC representation
        let sym = SymbolicSparseColMat::new_checked(
            a.n_rows,
            a.n_cols,
            a.indptr.clone(),
            None,
            a.indices.clone(),
        );
        let m = SparseColMat::new(sym, a.data.clone());
        let llt = m.sp_cholesky(Side::Lower).map_err(|e| {
            Error::SingularSystem(format!("{what}: Cholesky factorization failed ({e:?})"))
        })?;
        Ok(Self { llt, n: a.n_rows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place_with_conj(Conj::No, m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    /// Solves for every column of `b` in place.
    pub fn solve_columns(&self, b: &mut Mat<f64>) {
        self.llt.solve_in_place_with_conj(Conj::No, b.as_mut());
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_assembly_and_solve() {
        // 1D Laplacian from two-node elements
        let n = 6;
        let mut a = Csr::from_elements(
            n,
            n,
            n - 1,
            |t, out| out.extend([t, t + 1]),
            |t, out| out.extend([t, t + 1]),
        );
        for t in 0..n - 1 {
            a.add(t, t, 1.0);
            a.add(t + 1, t + 1, 1.0);
            a.add(t, t + 1, -1.0);
            a.add(t + 1, t, -1.0);
        }
        a.add(0, 0, 1.0);
        assert_eq!(a.nnz(), 3 * n - 2);
        assert_eq!(a.asymmetry(), 0.0);
        let chol = Cholesky::new(&a, "test").unwrap();
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b = a.mul(&x);
        let y = chol.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
        let bt = a.mul_transpose(&x);
        assert_eq!(bt, b);
    }
}
