//! Thin wrapper over faer's sparse matrices and sparse LU.

use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::error::{Error, Result};

/// Square sparse matrix assembled from (row, col, value) triplets;
/// duplicate entries are summed.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    mat: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let triplets: Vec<Triplet<usize, usize, f64>> = entries
            .iter()
            .map(|&(i, j, v)| Triplet::new(i, j, v))
            .collect();
        let mat = SparseColMat::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::LinearSolve(format!("assembly failed: {e:?}")))?;
        Ok(Self { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.mat.as_ref().triplet_iter().count()
    }

    /// All stored entries as (row, col, value).
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        self.mat
            .as_ref()
            .triplet_iter()
            .map(|t| (t.row, t.col, *t.val))
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for t in self.mat.as_ref().triplet_iter() {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for t in self.mat.as_ref().triplet_iter() {
            if t.row == t.col {
                d[t.row] += t.val;
            }
        }
        d
    }

    /// `self + diag(d)`
    pub fn add_diagonal(&self, d: &[f64]) -> Result<Self> {
        let mut e = self.entries();
        e.extend(d.iter().enumerate().map(|(i, &v)| (i, i, v)));
        Self::from_triplets(self.dim(), &e)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = vec![vec![0.0; n]; n];
        for t in self.mat.as_ref().triplet_iter() {
            out[t.row][t.col] += t.val;
        }
        out
    }

    /// Solve `self x = b` by sparse LU.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::LinearSolve(format!(
                "right-hand side has length {} but matrix is {}x{}",
                b.len(),
                self.dim(),
                self.dim()
            )));
        }
        if b.is_empty() {
            return Ok(Vec::new());
        }
        let lu = self
            .mat
            .sp_lu()
            .map_err(|e| Error::LinearSolve(format!("LU factorization failed: {e:?}")))?;
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let x = faer::linalg::solvers::Solve::solve(&lu, &rhs);
        let x: Vec<f64> = (0..b.len()).map(|i| x[i]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("singular or ill-conditioned matrix".into()));
        }
        Ok(x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
