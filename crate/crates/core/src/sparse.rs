//! Compressed-row sparse matrices.
//!
//! [`CsrMatrix`] is a general rectangular matrix used for gradient operators,
//! pixel selectors and the (asymmetric) random-walk Laplacian. [`SparseSym`]
//! is the square, symmetric container that holds every Laplacian the priors
//! are built from.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::linalg::LinearOperator;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: vec![1.0; n] }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate entries
    /// are summed; entries that sum to exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        t.sort_unstable_by_key(|a| (a.0, a.1));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut iter = t.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let trip = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|(i, j)| (i, j, m[(i, j)]));
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.ncols, x.len())?;
        let mut out = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut out);
        Ok(out)
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &CsrMatrix) -> Result<CsrMatrix> {
        check_dim(self.ncols, rhs.nrows)?;
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                trip.extend(rhs.row(k).map(|(j, b)| (i, j, a * b)));
            }
        }
        Ok(Self::from_triplets(self.nrows, rhs.ncols, trip))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }
}

/// Square sparse matrix flagged as symmetric.
///
/// The flag is set by constructors that produce symmetric matrices by
/// construction (Laplacians, congruence transforms `P^T M P`); it is not
/// re-verified on every operation. [`SparseSym::is_symmetric`] performs the
/// structural check.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym {
    csr: CsrMatrix,
    symmetric: bool,
}

impl SparseSym {
    pub fn zeros(dim: usize) -> Self {
        Self { csr: CsrMatrix::zeros(dim, dim), symmetric: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self { csr: CsrMatrix::identity(dim), symmetric: true }
    }

    /// Wraps a square CSR matrix, verifying symmetry to within `1e-12`
    /// relative to its largest entry.
    pub fn from_csr(csr: CsrMatrix) -> Result<Self> {
        check_dim(csr.nrows(), csr.ncols())?;
        let out = Self { csr, symmetric: true };
        if !out.is_symmetric(1e-12) {
            return Err(Error::invalid("matrix is not symmetric"));
        }
        Ok(out)
    }

    /// Builds a symmetric matrix from triplets that already list both
    /// `(i, j)` and `(j, i)`.
    pub(crate) fn from_sym_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        Self { csr: CsrMatrix::from_triplets(dim, dim, triplets), symmetric: true }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_csr(CsrMatrix::from_dense(m))
    }

    pub fn dim(&self) -> usize {
        self.csr.nrows()
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn symmetric_flag(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.csr.triplets()
    }

    /// Checks that every stored `(i, j)` has a matching `(j, i)` within
    /// `tol * max|a_ij|`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        self.csr.triplets().all(|(i, j, v)| (v - self.csr.get(j, i)).abs() <= tol * scale)
    }

    pub fn max_abs(&self) -> f64 {
        self.csr.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.csr.mul_vec(x)
    }

    /// `x^T M x`
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut acc = 0.0;
        for i in 0..self.dim() {
            let mut row = 0.0;
            for (j, v) in self.csr.row(i) {
                row += v * x[j];
            }
            acc += x[i] * row;
        }
        Ok(acc)
    }

    /// Off-diagonal entries summed in column order, then the diagonal.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let off: f64 = self.csr.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
                off + self.csr.get(i, i)
            })
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.csr.get(i, i)).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_sym_triplets(self.dim(), self.triplets().map(|(i, j, v)| (i, j, c * v)))
    }

    /// `shift * I + sum_k c_k M_k`.
    pub fn combine(dim: usize, shift: f64, terms: &[(f64, &SparseSym)]) -> Result<Self> {
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        if shift != 0.0 {
            trip.extend((0..dim).map(|i| (i, i, shift)));
        }
        for (c, m) in terms {
            check_dim(dim, m.dim())?;
            if *c != 0.0 {
                trip.extend(m.triplets().map(|(i, j, v)| (i, j, c * v)));
            }
        }
        Ok(Self::from_sym_triplets(dim, trip))
    }

    /// Sum of equally-sized symmetric matrices.
    pub fn sum<'a>(dim: usize, terms: impl IntoIterator<Item = &'a SparseSym>) -> Result<Self> {
        let terms: Vec<(f64, &SparseSym)> = terms.into_iter().map(|m| (1.0, m)).collect();
        Self::combine(dim, 0.0, &terms)
    }

    /// Congruence transform `P^T M P` where `P` is `self.dim() x n`.
    pub fn congruence(&self, p: &CsrMatrix) -> Result<Self> {
        check_dim(self.dim(), p.nrows())?;
        let mut trip = Vec::new();
        for (a, b, v) in self.triplets() {
            for (i, pa) in p.row(a) {
                for (j, pb) in p.row(b) {
                    trip.push((i, j, pa * v * pb));
                }
            }
        }
        Ok(Self::from_sym_triplets(p.ncols(), trip))
    }

    /// `M^T M` for a general (possibly asymmetric) square matrix.
    pub fn gram(m: &CsrMatrix) -> Self {
        let mut trip = Vec::new();
        for a in 0..m.nrows() {
            let row: Vec<(usize, f64)> = m.row(a).collect();
            for &(i, vi) in &row {
                for &(j, vj) in &row {
                    trip.push((i, j, vi * vj));
                }
            }
        }
        Self::from_sym_triplets(m.ncols(), trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.csr.to_dense()
    }
}

impl LinearOperator for SparseSym {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.csr.mul_vec_into(x, out)
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.mul_vec_into(x, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = CsrMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn congruence_matches_dense() {
        let m = SparseSym::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 3.0])).unwrap();
        let p = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]));
        let got = m.congruence(&p).unwrap().to_dense();
        let pd = p.to_dense();
        let want = pd.transpose() * m.to_dense() * pd;
        assert!((got - want).abs().max() < 1e-14);
    }

    #[test]
    fn gram_matches_dense() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.25, 1.0]));
        let got = SparseSym::gram(&a).to_dense();
        let want = a.to_dense().transpose() * a.to_dense();
        assert!((got - want).abs().max() < 1e-14);
    }

    #[test]
    fn from_csr_rejects_asymmetric() {
        let a = CsrMatrix::from_triplets(2, 2, [(0, 1, 1.0)]);
        assert!(SparseSym::from_csr(a).is_err());
    }

    #[test]
    fn quad_form_dimension_mismatch() {
        let m = SparseSym::identity(3);
        assert!(matches!(m.quad_form(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }
}
