//! Compressed sparse rows for assembly and matrix-vector products, with
//! direct factorizations delegated to faer.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Sums duplicate entries; rows are sorted by column.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(t.len() / 4);
        let mut data: Vec<f64> = Vec::with_capacity(t.len() / 4);
        let mut last = (usize::MAX, usize::MAX);
        for (i, j, v) in t {
            if (i, j) == last {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = (i, j);
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Csr { n, indptr, indices, data }
    }

    pub fn zeros(n: usize) -> Self {
        Csr { n, indptr: vec![0; n + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn dot_row(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| v * x[j]).sum()
    }

    /// Entrywise a·self + b·other (same dimension).
    pub fn axpby(&self, a: f64, other: &Csr, b: f64) -> Csr {
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            t.extend(self.row(i).map(|(j, v)| (i, j, a * v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, b * v)));
        }
        Csr::from_triplets(self.n, t)
    }

    pub fn scale(&self, c: f64) -> Csr {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= c);
        m
    }

    /// Principal submatrix on `keep` (global indices, ascending not required).
    pub fn principal(&self, keep: &[usize]) -> Csr {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let mut t = Vec::new();
        for (k, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    t.push((k, pos[j], v));
                }
            }
        }
        Csr::from_triplets(keep.len(), t)
    }

    /// y[k] = Σ_j A[rows[k], j] x[j] over columns j in `cols` (x indexed like cols).
    pub fn block_matvec(&self, rows: &[usize], cols: &[usize], x: &[f64]) -> Vec<f64> {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &j) in cols.iter().enumerate() {
            pos[j] = k;
        }
        rows.iter()
            .map(|&i| self.row(i).filter(|&(j, _)| pos[j] != usize::MAX).map(|(j, v)| v * x[pos[j]]).sum())
            .collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let vt = self.row(j).find(|&(c, _)| c == i).map(|(_, w)| w).unwrap_or(0.0);
                worst = worst.max((v - vt).abs());
            }
        }
        worst
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.push(Triplet::new(i, j, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

/// Direct sparse factorization: Cholesky when positive definite, LU otherwise.
pub enum Factor {
    Cholesky(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl std::fmt::Debug for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factor::Cholesky(_) => f.write_str("Factor::Cholesky"),
            Factor::Lu(_) => f.write_str("Factor::Lu"),
        }
    }
}

impl Factor {
    pub fn cholesky(a: &Csr) -> Result<Self> {
        let m = a.to_faer()?;
        m.sp_cholesky(Side::Lower)
            .map(Factor::Cholesky)
            .map_err(|e| Error::Factorization(format!("cholesky: {e:?}")))
    }

    pub fn lu(a: &Csr) -> Result<Self> {
        let m = a.to_faer()?;
        m.sp_lu().map(Factor::Lu).map_err(|e| Error::Factorization(format!("lu: {e:?}")))
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self, Factor::Cholesky(_))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = match self {
            Factor::Cholesky(f) => f.solve(&rhs),
            Factor::Lu(f) => f.solve(&rhs),
        };
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
