//! Weighted graphs, Laplacians, signal-dependent edge weights and spectral
//! utilities.
//!
//! For an undirected graph with adjacency `W` the combinatorial Laplacian is
//! `L = diag(W 1) - W`. Its quadratic form `x^T L x = sum_(i,j) w_ij (x_i - x_j)^2`
//! is the graph Laplacian regularizer (GLR): small for signals that vary
//! little across strongly weighted edges.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::linalg::dot;
use crate::sparse::{CsrMatrix, SparseSym};

/// Lower bound applied to every exponential edge weight, so gradient-graph
/// degrees stay strictly positive.
pub const EDGE_WEIGHT_FLOOR: f64 = 1e-12;

/// Largest dimension [`spectrum`] will densify by default.
pub const DEFAULT_EIGEN_CAP: usize = 4096;

/// Undirected weighted graph stored as an edge list, each unordered pair once.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl Graph {
    pub fn new(node_count: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(i, j, w) in &edges {
            if i >= node_count || j >= node_count {
                return Err(Error::IndexOutOfRange { index: i.max(j), max: node_count - 1 });
            }
            if i == j {
                return Err(Error::invalid(format!("self loop at node {i}")));
            }
            if !w.is_finite() {
                return Err(Error::invalid(format!("non-finite weight on edge ({i}, {j})")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::invalid(format!("edge ({i}, {j}) listed twice")));
            }
        }
        Ok(Self { node_count, edges })
    }

    /// Path graph `0 - 1 - ... - n` with the given consecutive edge weights.
    pub fn path(weights: &[f64]) -> Result<Self> {
        let edges = weights.iter().enumerate().map(|(i, &w)| (i, i + 1, w)).collect();
        Self::new(weights.len() + 1, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn is_positive(&self) -> bool {
        self.edges.iter().all(|e| e.2 > 0.0)
    }
}

/// 4-connected neighbor pairs `(i, j)`, `i < j`, of a row-major grid.
pub fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                out.push((i, i + 1));
            }
            if r + 1 < rows {
                out.push((i, i + cols));
            }
        }
    }
    out
}

/// Combinatorial Laplacian `diag(W 1) - W`.
///
/// Each diagonal entry is the negated sum of its row's off-diagonal entries,
/// accumulated in column order, so [`SparseSym::row_sums`] is exactly zero.
pub fn laplacian(g: &Graph) -> SparseSym {
    let n = g.node_count;
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, w) in &g.edges {
        nbrs[i].push((j, w));
        nbrs[j].push((i, w));
    }
    let mut trip = Vec::with_capacity(n + 2 * g.edges.len());
    for (i, row) in nbrs.iter_mut().enumerate() {
        row.sort_by_key(|e| e.0);
        let mut off = 0.0;
        for &(j, w) in row.iter() {
            off += -w;
            trip.push((i, j, -w));
        }
        trip.push((i, i, -off));
    }
    SparseSym::from_sym_triplets(n, trip)
}

/// Graph Laplacian regularizer `x^T L x`.
pub fn glr(l: &SparseSym, x: &[f64]) -> Result<f64> {
    l.quad_form(x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    /// Feature-distance bandwidth.
    pub sigma_f: f64,
    /// Pixel-intensity bandwidth (pixel graphs).
    pub sigma_x: f64,
    /// Gradient bandwidth (gradient graphs).
    pub sigma_a: f64,
}

impl KernelParams {
    pub fn new(sigma_f: f64, sigma_x: f64, sigma_a: f64) -> Result<Self> {
        let p = Self { sigma_f, sigma_x, sigma_a };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_f", self.sigma_f), ("sigma_x", self.sigma_x), ("sigma_a", self.sigma_a)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { sigma_f: 1.0, sigma_x: 0.1, sigma_a: 0.1 }
    }
}

/// Which sample bandwidth an edge weight uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// Pixel samples, bandwidth `sigma_x`.
    Intensity,
    /// Gradient samples, bandwidth `sigma_a`.
    Gradient,
}

/// `exp(-|f_i - f_j|^2 / sigma_f^2 - |s_i - s_j|^2 / sigma^2)`, floored at
/// [`EDGE_WEIGHT_FLOOR`].
pub fn edge_weight(f_i: &[f64], f_j: &[f64], s_i: f64, s_j: f64, p: &KernelParams, mode: WeightMode) -> f64 {
    debug_assert_eq!(f_i.len(), f_j.len());
    let df: f64 = f_i.iter().zip(f_j).map(|(a, b)| (a - b) * (a - b)).sum();
    let sigma = match mode {
        WeightMode::Intensity => p.sigma_x,
        WeightMode::Gradient => p.sigma_a,
    };
    let ds = (s_i - s_j) * (s_i - s_j);
    let w = (-df / (p.sigma_f * p.sigma_f) - ds / (sigma * sigma)).exp();
    w.max(EDGE_WEIGHT_FLOOR)
}

/// Softmax over negated squared feature distances: `exp(-d_j) / sum_l exp(-d_l)`.
pub fn normalized_weights(d: &[f64]) -> Result<Vec<f64>> {
    if d.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature distance"));
    }
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = d.iter().map(|v| (-(v - min)).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / total).collect())
}

/// Random-walk Laplacian `D^-1 L` with `D = diag(L)`.
///
/// Fails with [`Error::ZeroDegree`] on an isolated node; see
/// [`random_walk_laplacian_guarded`] for the variant that zeroes such rows.
pub fn random_walk_laplacian(lbar: &SparseSym) -> Result<CsrMatrix> {
    rw_impl(lbar, true)
}

/// As [`random_walk_laplacian`], but an isolated node gets an all-zero row
/// and contributes nothing.
pub fn random_walk_laplacian_guarded(lbar: &SparseSym) -> CsrMatrix {
    rw_impl(lbar, false).expect("guarded variant never fails")
}

fn rw_impl(lbar: &SparseSym, strict: bool) -> Result<CsrMatrix> {
    let n = lbar.dim();
    let csr = lbar.csr();
    let mut trip = Vec::with_capacity(csr.nnz());
    for i in 0..n {
        let d = csr.get(i, i);
        if !(d > 0.0) {
            if strict {
                return Err(Error::ZeroDegree(i));
            }
            continue;
        }
        let mut off = 0.0;
        for (j, v) in csr.row(i) {
            if j != i {
                let s = v / d;
                off += s;
                trip.push((i, j, s));
            }
        }
        trip.push((i, i, -off));
    }
    Ok(CsrMatrix::from_triplets(n, n, trip))
}

/// Row sums of a general CSR matrix, off-diagonal entries first (column
/// order) and the diagonal last.
pub fn row_sums(m: &CsrMatrix) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| {
            let off: f64 = m.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
            off + m.get(i, i)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending and
/// eigenvectors as the columns of the returned matrix.
pub fn eigen_decompose(l: &SparseSym, cap: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if l.dim() > cap {
        return Err(Error::invalid(format!("dimension {} exceeds dense eigensolver cap {cap}", l.dim())));
    }
    let eig = SymmetricEigen::new(l.to_dense());
    let mut order: Vec<usize> = (0..l.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(l.dim(), l.dim());
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let n = col.norm();
        vectors.set_column(dst, &(col / n));
    }
    Ok((values, vectors))
}

/// The `k` smallest eigenpairs of a symmetric matrix, ascending.
pub fn spectrum(l: &SparseSym, k: usize) -> Result<Vec<EigenPair>> {
    spectrum_with_cap(l, k, DEFAULT_EIGEN_CAP)
}

pub fn spectrum_with_cap(l: &SparseSym, k: usize, cap: usize) -> Result<Vec<EigenPair>> {
    if k > l.dim() {
        return Err(Error::invalid(format!("requested {k} eigenpairs of a {}-dimensional matrix", l.dim())));
    }
    let (values, vectors) = eigen_decompose(l, cap)?;
    Ok((0..k).map(|i| EigenPair { value: values[i], vector: vectors.column(i).iter().copied().collect() }).collect())
}

/// Graph Fourier transform `V^T x`.
pub fn gft(l: &SparseSym, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(l.dim(), x.len())?;
    let (_, v) = eigen_decompose(l, DEFAULT_EIGEN_CAP)?;
    Ok((0..l.dim()).map(|k| dot(v.column(k).as_slice(), x)).collect())
}

/// First-order truncated Taylor approximation of `(I + mu L_rw)^-1` expanded
/// about the midpoint `1 + mu` of its eigenvalue range:
/// `(1 + mu)^-2 ((1 + 2 mu) I - mu L_rw)`.
pub fn tse_filter(l_rw: &CsrMatrix, mu: f64) -> Result<DMatrix<f64>> {
    check_dim(l_rw.nrows(), l_rw.ncols())?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be non-negative, got {mu}")));
    }
    let n = l_rw.nrows();
    let s = (1.0 + mu) * (1.0 + mu);
    let mut f = DMatrix::identity(n, n) * ((1.0 + 2.0 * mu) / s);
    for (i, j, v) in l_rw.triplets() {
        f[(i, j)] -= mu * v / s;
    }
    Ok(f)
}

/// Gain of [`tse_filter`] on constant signals: `(1 + 2 mu) / (1 + mu)^2`.
pub fn tse_dc_gain(mu: f64) -> f64 {
    (1.0 + 2.0 * mu) / ((1.0 + mu) * (1.0 + mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dense(l: &SparseSym) -> Vec<Vec<f64>> {
        let d = l.to_dense();
        (0..d.nrows()).map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect()).collect()
    }

    #[test]
    fn laplacian_single_edge() {
        let l = laplacian(&Graph::path(&[1.0]).unwrap());
        assert_eq!(dense(&l), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn laplacian_empty_graph_is_zero() {
        let l = laplacian(&Graph::new(3, vec![]).unwrap());
        assert_eq!(dense(&l), vec![vec![0.0; 3]; 3]);
    }

    #[test]
    fn laplacian_weighted_line() {
        let l = laplacian(&Graph::path(&[0.5, 2.0]).unwrap());
        assert_eq!(dense(&l), vec![vec![0.5, -0.5, 0.0], vec![-0.5, 2.5, -2.0], vec![0.0, -2.0, 2.0]]);
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(Graph::new(2, vec![(0, 0, 1.0)]).is_err());
        assert!(Graph::new(2, vec![(0, 2, 1.0)]).is_err());
        assert!(Graph::new(2, vec![(0, 1, 1.0), (1, 0, 1.0)]).is_err());
    }

    #[test]
    fn glr_examples() {
        let l = laplacian(&Graph::path(&[1.0]).unwrap());
        assert_eq!(glr(&l, &[3.5, 3.5]).unwrap(), 0.0);
        assert_eq!(glr(&l, &[0.0, 1.0]).unwrap(), 1.0);
        let l3 = laplacian(&Graph::path(&[1.0, 1.0]).unwrap());
        assert_eq!(glr(&l3, &[1.0, 2.0, 4.0]).unwrap(), 5.0);
        assert!(glr(&l3, &[1.0]).is_err());
    }

    #[test]
    fn edge_weight_examples() {
        let p = KernelParams::new(0.5, 0.2, 0.3).unwrap();
        let f = [0.1, 0.2];
        assert_eq!(edge_weight(&f, &f, 0.4, 0.4, &p, WeightMode::Intensity), 1.0);
        assert_abs_diff_eq!(edge_weight(&f, &f, 0.0, 0.2, &p, WeightMode::Intensity), (-1.0f64).exp(), epsilon = 1e-15);
        let g = [0.1, 0.7];
        assert_abs_diff_eq!(edge_weight(&f, &g, 0.0, 0.3, &p, WeightMode::Gradient), (-2.0f64).exp(), epsilon = 1e-15);
        assert_eq!(edge_weight(&f, &f, 0.0, 100.0, &p, WeightMode::Intensity), EDGE_WEIGHT_FLOOR);
    }

    #[test]
    fn kernel_params_must_be_positive() {
        assert!(KernelParams::new(0.0, 1.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn normalized_weight_examples() {
        assert_eq!(normalized_weights(&[0.7, 0.7]).unwrap(), vec![0.5, 0.5]);
        let w = normalized_weights(&[0.0, 3f64.ln()]).unwrap();
        assert_abs_diff_eq!(w[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.25, epsilon = 1e-15);
        assert_eq!(normalized_weights(&[5.0]).unwrap(), vec![1.0]);
        assert!(matches!(normalized_weights(&[]), Err(Error::EmptyNeighborhood)));
        // far-away features would underflow without the shift
        let w = normalized_weights(&[1e4, 1e4 + 1.0]).unwrap();
        assert_abs_diff_eq!(w[0] + w[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn random_walk_examples() {
        let unit = laplacian(&Graph::path(&[1.0]).unwrap());
        let double = laplacian(&Graph::path(&[2.0]).unwrap());
        let want = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(random_walk_laplacian(&unit).unwrap().to_dense(), want);
        assert_eq!(random_walk_laplacian(&double).unwrap().to_dense(), want);

        let l = laplacian(&Graph::path(&[1.0, 3.0]).unwrap());
        let rw = random_walk_laplacian(&l).unwrap().to_dense();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -0.25, 1.0, -0.75, 0.0, -1.0, 1.0]);
        assert!((rw - want).abs().max() < 1e-15);
    }

    #[test]
    fn random_walk_isolated_node() {
        let l = laplacian(&Graph::new(3, vec![(0, 1, 1.0)]).unwrap());
        assert!(matches!(random_walk_laplacian(&l), Err(Error::ZeroDegree(2))));
        let g = random_walk_laplacian_guarded(&l);
        assert_eq!(g.row(2).count(), 0);
        assert_eq!(row_sums(&g), vec![0.0; 3]);
    }

    #[test]
    fn spectrum_examples() {
        let l = laplacian(&Graph::path(&[1.0]).unwrap());
        let s = spectrum(&l, 2).unwrap();
        assert_abs_diff_eq!(s[0].value, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[1].value, 2.0, epsilon = 1e-14);
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(s[0].vector[0].abs(), r, epsilon = 1e-14);
        assert_abs_diff_eq!(s[0].vector[0], s[0].vector[1], epsilon = 1e-14);

        let z = spectrum(&SparseSym::zeros(3), 1).unwrap();
        assert_eq!(z[0].value, 0.0);
        assert!(spectrum(&SparseSym::zeros(3), 4).is_err());
    }

    #[test]
    fn spectrum_respects_cap() {
        assert!(spectrum_with_cap(&SparseSym::identity(5), 1, 4).is_err());
    }

    #[test]
    fn gft_examples() {
        let l = laplacian(&Graph::path(&[1.0]).unwrap());
        let t = gft(&l, &[1.0, 0.0]).unwrap();
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(t[0].abs(), r, epsilon = 1e-14);
        assert_abs_diff_eq!(t[1].abs(), r, epsilon = 1e-14);
        assert_eq!(gft(&l, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(gft(&l, &[0.0]).is_err());
    }

    #[test]
    fn tse_filter_basics() {
        let l = laplacian(&Graph::path(&[1.0, 3.0]).unwrap());
        let rw = random_walk_laplacian(&l).unwrap();
        assert_eq!(tse_filter(&rw, 0.0).unwrap(), DMatrix::identity(3, 3));
        assert!(tse_filter(&rw, -0.1).is_err());
        let f = tse_filter(&rw, 0.3).unwrap();
        let ones = f * nalgebra::DVector::from_element(3, 1.0);
        for v in ones.iter() {
            assert_abs_diff_eq!(*v, tse_dc_gain(0.3), epsilon = 1e-15);
        }
    }
}
