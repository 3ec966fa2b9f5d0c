//! Gradient graph Laplacian regularizer (GGLR) priors over square patches.
//!
//! A pixel row `x` of length `n` has gradients `a = F x`, where `F` is the
//! `(n-1) x n` first-difference operator. A positive path graph over those
//! gradients with Laplacian `Lbar` gives the regularizer
//! `a^T Lbar a = x^T (F^T Lbar F) x`. The pixel-domain matrix `F^T Lbar F` is
//! the Laplacian of a signed "gradient-induced nodal graph" (GNG): it is PSD
//! and its null space holds every linear signal, so the prior favors
//! piecewise-linear rows.
//!
//! A patch prior sums such terms over
//!
//! * every row (selector `H_k`) and every column (`G_k`), giving the *inline*
//!   aggregate `L = sum H_k^T L_k H_k + G_k^T L_k G_k`, and
//! * every pair of adjacent columns (`J_k`) and rows (`K_k`), where the
//!   interleaving operator `Ft` takes horizontal (resp. vertical) gradients
//!   and a path graph runs *across* them, giving the *cross* aggregate `Lt`.
//!
//! Planes `x(r, c) = a r + b c + d` are annihilated by both aggregates. Rows
//! and columns alone cannot tell a plane from, e.g., a saddle whose rows and
//! columns are each linear; the cross terms can.

use crate::error::{check_dim, Error, Result};
use crate::features::FeatureField;
use crate::graph::{
    edge_weight, grid_edges, laplacian, random_walk_laplacian_guarded, Graph, KernelParams, WeightMode,
};
use crate::sparse::{CsrMatrix, SparseSym};

/// One `N x N` block, one row-major plane of length `N^2` per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    side: usize,
    channels: Vec<Vec<f64>>,
}

impl Patch {
    pub fn new(side: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        if side == 0 || channels.is_empty() {
            return Err(Error::invalid("patch needs a positive side and at least one channel"));
        }
        for ch in &channels {
            check_dim(side * side, ch.len())?;
        }
        Ok(Self { side, channels })
    }

    pub fn gray(side: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(side, vec![data])
    }

    /// Builds a single-channel patch from `f(row, col)`.
    pub fn from_fn(side: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..side * side).map(|i| f(i / side, i % side)).collect();
        Self { side, channels: vec![data] }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Single plane used to build graphs: BT.601 luma for three channels, the
    /// channel mean otherwise.
    pub fn luminance(&self) -> Vec<f64> {
        luminance(&self.channels)
    }
}

pub(crate) fn luminance(channels: &[Vec<f64>]) -> Vec<f64> {
    match channels {
        [one] => one.clone(),
        [r, g, b] => r.iter().zip(g).zip(b).map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b).collect(),
        many => {
            let k = many.len() as f64;
            (0..many[0].len()).map(|i| many.iter().map(|c| c[i]).sum::<f64>() / k).collect()
        }
    }
}

/// First-difference operator `F`, `(n-1) x n`, with `F[i][i] = 1` and
/// `F[i][i+1] = -1`.
pub fn grad_op(n: usize) -> Result<CsrMatrix> {
    if n < 2 {
        return Err(Error::invalid(format!("gradient operator needs n >= 2, got {n}")));
    }
    Ok(CsrMatrix::from_triplets(n - 1, n, (0..n - 1).flat_map(|i| [(i, i, 1.0), (i, i + 1, -1.0)])))
}

/// Pairwise-difference operator `Ft`, `n x 2n`: output `i` is
/// `v[2i] - v[2i + 1]` (0-based).
pub fn interleave_grad_op(n: usize) -> Result<CsrMatrix> {
    if n < 1 {
        return Err(Error::invalid("interleaved gradient operator needs n >= 1"));
    }
    Ok(CsrMatrix::from_triplets(n, 2 * n, (0..n).flat_map(|i| [(i, 2 * i, 1.0), (i, 2 * i + 1, -1.0)])))
}

fn selector(rows: usize, cols: usize, picks: impl Iterator<Item = usize>) -> CsrMatrix {
    CsrMatrix::from_triplets(rows, cols, picks.enumerate().map(|(i, j)| (i, j, 1.0)))
}

fn check_index(k: usize, max: usize) -> Result<()> {
    if k == 0 || k > max {
        Err(Error::IndexOutOfRange { index: k, max })
    } else {
        Ok(())
    }
}

fn row_pixels(n: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..n).map(move |c| k * n + c)
}

fn col_pixels(n: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..n).map(move |r| r * n + k)
}

/// Pixels of columns `k` and `k+1` interleaved row by row.
fn col_pair_pixels(n: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..n).flat_map(move |r| [r * n + k, r * n + k + 1])
}

/// Pixels of rows `k` and `k+1` interleaved column by column.
fn row_pair_pixels(n: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..n).flat_map(move |c| [k * n + c, (k + 1) * n + c])
}

/// `H_k`: picks row `k` (1-based) of an `n x n` patch, left to right.
pub fn row_selector(n: usize, k: usize) -> Result<CsrMatrix> {
    check_index(k, n)?;
    Ok(selector(n, n * n, row_pixels(n, k - 1)))
}

/// `G_k`: picks column `k` (1-based), top to bottom.
pub fn col_selector(n: usize, k: usize) -> Result<CsrMatrix> {
    check_index(k, n)?;
    Ok(selector(n, n * n, col_pixels(n, k - 1)))
}

/// `J_k`: `2n x n^2`, odd outputs from column `k`, even from column `k+1`
/// (1-based), row by row.
pub fn col_pair_selector(n: usize, k: usize) -> Result<CsrMatrix> {
    check_index(k, n.saturating_sub(1))?;
    Ok(selector(2 * n, n * n, col_pair_pixels(n, k - 1)))
}

/// `K_k`: `2n x n^2`, odd outputs from row `k`, even from row `k+1`.
pub fn row_pair_selector(n: usize, k: usize) -> Result<CsrMatrix> {
    check_index(k, n.saturating_sub(1))?;
    Ok(selector(2 * n, n * n, row_pair_pixels(n, k - 1)))
}

/// GNG Laplacian `Fop^T Lbar Fop`.
pub fn gng_laplacian(lbar: &SparseSym, fop: &CsrMatrix) -> Result<SparseSym> {
    lbar.congruence(fop)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// `Lbar` as built.
    #[default]
    Combinatorial,
    /// `Lrw^T Lrw` with `Lrw = D^-1 Lbar`.
    RandomWalk,
}

/// The four GGLR partial sums, kept for the four-way ADMM split.
#[derive(Clone, Debug)]
pub struct PriorComponents {
    /// `sum_k H_k^T L_k H_k`
    pub rows: SparseSym,
    /// `sum_k G_k^T L_k G_k`
    pub cols: SparseSym,
    /// `sum_k J_k^T L_k J_k`
    pub col_pairs: SparseSym,
    /// `sum_k K_k^T L_k K_k`
    pub row_pairs: SparseSym,
}

impl PriorComponents {
    pub fn as_array(&self) -> [&SparseSym; 4] {
        [&self.rows, &self.cols, &self.col_pairs, &self.row_pairs]
    }
}

/// Aggregate priors `mu x^T L x + mu_tilde x^T Lt x` over one patch.
#[derive(Clone, Debug)]
pub struct GngPrior {
    pub inline: SparseSym,
    pub cross: SparseSym,
    pub mu: f64,
    pub mu_tilde: f64,
    pub components: Option<PriorComponents>,
}

impl GngPrior {
    pub fn dim(&self) -> usize {
        self.inline.dim()
    }

    pub fn with_weights(mut self, mu: f64, mu_tilde: f64) -> Self {
        self.mu = mu;
        self.mu_tilde = mu_tilde;
        self
    }

    pub fn without_components(mut self) -> Self {
        self.components = None;
        self
    }

    /// Wraps a pixel-graph GLR prior, split into its horizontal and vertical
    /// edge sets, so the same solvers accept it. The cross aggregate is zero.
    pub fn from_glr(horizontal: SparseSym, vertical: SparseSym, mu: f64) -> Result<Self> {
        let dim = horizontal.dim();
        let inline = SparseSym::sum(dim, [&horizontal, &vertical])?;
        Ok(Self {
            inline,
            cross: SparseSym::zeros(dim),
            mu,
            mu_tilde: 0.0,
            components: Some(PriorComponents {
                rows: horizontal,
                cols: vertical,
                col_pairs: SparseSym::zeros(dim),
                row_pairs: SparseSym::zeros(dim),
            }),
        })
    }

    /// The full coefficient `mu L + mu_tilde Lt`.
    pub fn combined(&self) -> Result<SparseSym> {
        SparseSym::combine(self.dim(), 0.0, &[(self.mu, &self.inline), (self.mu_tilde, &self.cross)])
    }
}

/// Builds one line term: gradients `fop * x[pixels]`, a path graph over them
/// weighted by [`edge_weight`] in gradient mode, and the resulting GNG
/// Laplacian scattered back to pixel indices.
fn line_term(
    x: &[f64],
    pixels: &[usize],
    feature_pixel: impl Fn(usize) -> usize,
    fop: &CsrMatrix,
    features: &FeatureField,
    p: &KernelParams,
    normalization: Normalization,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let local: Vec<f64> = pixels.iter().map(|&i| x[i]).collect();
    let mut grads = vec![0.0; fop.nrows()];
    fop.mul_vec_into(&local, &mut grads);
    let weights: Vec<f64> = (0..grads.len().saturating_sub(1))
        .map(|t| {
            edge_weight(
                features.get(feature_pixel(t)),
                features.get(feature_pixel(t + 1)),
                grads[t],
                grads[t + 1],
                p,
                WeightMode::Gradient,
            )
        })
        .collect();
    let lbar = if weights.is_empty() {
        SparseSym::zeros(grads.len())
    } else {
        laplacian(&Graph::path(&weights).expect("path graph is valid"))
    };
    let core = match normalization {
        Normalization::Combinatorial => lbar,
        Normalization::RandomWalk => SparseSym::gram(&random_walk_laplacian_guarded(&lbar)),
    };
    let gng = core.congruence(fop).expect("operator shapes agree");
    out.extend(gng.triplets().map(|(i, j, v)| (pixels[i], pixels[j], v)));
}

/// Options for building a [`GngPrior`] from an estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorOptions {
    pub normalization: Normalization,
    pub keep_components: bool,
}

impl Default for PriorOptions {
    fn default() -> Self {
        Self { normalization: Normalization::Combinatorial, keep_components: false }
    }
}

/// Assembles the inline and cross GGLR aggregates from an estimate plane of
/// side `n`. Weights `mu` and `mu_tilde` are set to 1.
pub fn build_prior_from_plane(
    x: &[f64],
    n: usize,
    features: &FeatureField,
    p: &KernelParams,
    opts: PriorOptions,
) -> Result<GngPrior> {
    if n < 3 {
        return Err(Error::PatchTooSmall { side: n, min: 3 });
    }
    check_dim(n * n, x.len())?;
    check_dim(n * n, features.len())?;
    let dim = n * n;
    let f = grad_op(n)?;
    let ft = interleave_grad_op(n)?;
    let norm = opts.normalization;

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for k in 0..n {
        let px: Vec<usize> = row_pixels(n, k).collect();
        line_term(x, &px, |t| k * n + t, &f, features, p, norm, &mut rows);
        let px: Vec<usize> = col_pixels(n, k).collect();
        line_term(x, &px, |t| t * n + k, &f, features, p, norm, &mut cols);
    }
    let mut col_pairs = Vec::new();
    let mut row_pairs = Vec::new();
    for k in 0..n - 1 {
        let px: Vec<usize> = col_pair_pixels(n, k).collect();
        line_term(x, &px, |t| t * n + k, &ft, features, p, norm, &mut col_pairs);
        let px: Vec<usize> = row_pair_pixels(n, k).collect();
        line_term(x, &px, |t| k * n + t, &ft, features, p, norm, &mut row_pairs);
    }

    let build = |t: Vec<(usize, usize, f64)>| SparseSym::from_sym_triplets(dim, t);
    let comps = PriorComponents {
        rows: build(rows),
        cols: build(cols),
        col_pairs: build(col_pairs),
        row_pairs: build(row_pairs),
    };
    let inline = SparseSym::sum(dim, [&comps.rows, &comps.cols])?;
    let cross = SparseSym::sum(dim, [&comps.col_pairs, &comps.row_pairs])?;
    Ok(GngPrior { inline, cross, mu: 1.0, mu_tilde: 1.0, components: opts.keep_components.then_some(comps) })
}

/// [`build_prior_from_plane`] on the luminance of `x_est`, keeping the
/// per-direction partial sums.
pub fn build_prior(
    x_est: &Patch,
    features: &FeatureField,
    p: &KernelParams,
    normalization: Normalization,
) -> Result<GngPrior> {
    build_prior_from_plane(
        &x_est.luminance(),
        x_est.side(),
        features,
        p,
        PriorOptions { normalization, keep_components: true },
    )
}

/// `mu x^T L x + mu_tilde x^T Lt x`
pub fn gglr(prior: &GngPrior, x: &[f64]) -> Result<f64> {
    check_dim(prior.dim(), x.len())?;
    let a = if prior.mu != 0.0 { prior.inline.quad_form(x)? } else { 0.0 };
    let b = if prior.mu_tilde != 0.0 { prior.cross.quad_form(x)? } else { 0.0 };
    Ok(prior.mu * a + prior.mu_tilde * b)
}

/// Horizontal- and vertical-edge Laplacians of the 4-connected pixel graph
/// with intensity-mode weights.
pub fn glr_terms(x: &[f64], n: usize, features: &FeatureField, p: &KernelParams) -> Result<(SparseSym, SparseSym)> {
    if n < 2 {
        return Err(Error::PatchTooSmall { side: n, min: 2 });
    }
    check_dim(n * n, x.len())?;
    check_dim(n * n, features.len())?;
    let (mut h, mut v) = (Vec::new(), Vec::new());
    for (i, j) in grid_edges(n, n) {
        let w = edge_weight(features.get(i), features.get(j), x[i], x[j], p, WeightMode::Intensity);
        if j == i + 1 {
            h.push((i, j, w));
        } else {
            v.push((i, j, w));
        }
    }
    let dim = n * n;
    Ok((laplacian(&Graph::new(dim, h)?), laplacian(&Graph::new(dim, v)?)))
}

/// Combinatorial Laplacian of the 4-connected pixel graph: the GLR baseline prior.
pub fn build_glr_prior(x_est: &Patch, features: &FeatureField, p: &KernelParams) -> Result<SparseSym> {
    let (h, v) = glr_terms(&x_est.luminance(), x_est.side(), features, p)?;
    SparseSym::sum(h.dim(), [&h, &v])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{compute_features, FeatureConfig};
    use nalgebra::DMatrix;

    fn rows_of(m: &CsrMatrix) -> Vec<Vec<f64>> {
        let d = m.to_dense();
        (0..d.nrows()).map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect()).collect()
    }

    #[test]
    fn grad_op_examples() {
        assert_eq!(rows_of(&grad_op(3).unwrap()), vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0]]);
        assert_eq!(rows_of(&grad_op(2).unwrap()), vec![vec![1.0, -1.0]]);
        assert_eq!(grad_op(4).unwrap().mul_vec(&[5.0; 4]).unwrap(), vec![0.0; 3]);
        assert!(grad_op(1).is_err());
    }

    #[test]
    fn interleave_grad_op_examples() {
        assert_eq!(
            rows_of(&interleave_grad_op(3).unwrap()),
            vec![
                vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0, 1.0, -1.0]
            ]
        );
        assert_eq!(rows_of(&interleave_grad_op(1).unwrap()), vec![vec![1.0, -1.0]]);
        assert_eq!(interleave_grad_op(2).unwrap().mul_vec(&[0.3, 0.3, 2.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn selector_examples() {
        assert_eq!(rows_of(&row_selector(2, 1).unwrap()), vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]);
        assert_eq!(rows_of(&col_selector(2, 2).unwrap()), vec![vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]]);
        let x: Vec<f64> = (0..9).map(f64::from).collect();
        assert_eq!(row_selector(3, 2).unwrap().mul_vec(&x).unwrap(), vec![3.0, 4.0, 5.0]);
        assert!(row_selector(3, 0).is_err());
        assert!(col_selector(3, 4).is_err());
    }

    #[test]
    fn pair_selector_examples() {
        let mut want = vec![vec![0.0; 9]; 6];
        for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 4), (4, 6), (5, 7)] {
            want[i][j] = 1.0;
        }
        assert_eq!(rows_of(&col_pair_selector(3, 1).unwrap()), want);
        let k = row_pair_selector(2, 1).unwrap();
        assert_eq!(k.mul_vec(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 3.0, 2.0, 4.0]);
        assert!(col_pair_selector(3, 3).is_err());
        assert!(row_pair_selector(3, 0).is_err());
    }

    #[test]
    fn cross_gradients_are_horizontal_differences() {
        let x: Vec<f64> = (0..9).map(|i| ((i * i) % 7) as f64).collect();
        let j1 = col_pair_selector(3, 1).unwrap();
        let g = interleave_grad_op(3).unwrap().mul_vec(&j1.mul_vec(&x).unwrap()).unwrap();
        for r in 0..3 {
            assert_eq!(g[r], x[3 * r] - x[3 * r + 1]);
        }
    }

    #[test]
    fn gng_laplacian_single_edge() {
        let w = 0.7;
        let lbar = laplacian(&Graph::path(&[w]).unwrap());
        let l = gng_laplacian(&lbar, &grad_op(3).unwrap()).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 1.0, -2.0, 4.0, -2.0, 1.0, -2.0, 1.0]) * w;
        assert!((l.to_dense() - want).abs().max() < 1e-15);
        // signed graph: W = diag(L) - L has positive (1,2), (2,3) and negative (1,3)
        assert!(-l.get(0, 1) > 0.0 && -l.get(1, 2) > 0.0 && -l.get(0, 2) < 0.0);
        let r = l.mul_vec(&[1.0, 2.0, 3.0]).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
        assert!(gng_laplacian(&lbar, &grad_op(4).unwrap()).is_err());
    }

    fn prior_for(x: &Patch, norm: Normalization) -> GngPrior {
        let f = compute_features(x, &FeatureConfig::default());
        build_prior(x, &f, &KernelParams::new(0.7, 0.2, 0.3).unwrap(), norm).unwrap()
    }

    #[test]
    fn planar_patch_has_zero_prior() {
        for norm in [Normalization::Combinatorial, Normalization::RandomWalk] {
            let x = Patch::from_fn(5, |r, c| 2.0 * r as f64 + 3.0 * c as f64 + 1.0);
            let prior = prior_for(&x, norm);
            assert!(prior.inline.quad_form(x.channel(0)).unwrap().abs() < 1e-9);
            assert!(prior.cross.quad_form(x.channel(0)).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn counterexample_separates_inline_and_cross() {
        let data = vec![1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0];
        let x = Patch::gray(3, data.clone()).unwrap();
        let prior = prior_for(&x, Normalization::Combinatorial);
        assert!(prior.inline.quad_form(&data).unwrap().abs() <= 1e-12);
        assert!(prior.cross.quad_form(&data).unwrap() >= 1e-6);
    }

    #[test]
    fn constant_patch_has_zero_prior() {
        let x = Patch::gray(4, vec![0.3; 16]).unwrap();
        let prior = prior_for(&x, Normalization::Combinatorial);
        assert!(gglr(&prior, x.channel(0)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn degenerate_patch_rejected() {
        let x = Patch::gray(2, vec![0.0; 4]).unwrap();
        let f = compute_features(&x, &FeatureConfig::default());
        assert!(matches!(
            build_prior(&x, &f, &KernelParams::default(), Normalization::Combinatorial),
            Err(Error::PatchTooSmall { .. })
        ));
    }

    #[test]
    fn gglr_zero_weights() {
        let x = Patch::from_fn(4, |r, c| ((r * 5 + c * 3) % 7) as f64);
        let prior = prior_for(&x, Normalization::Combinatorial).with_weights(0.0, 0.0);
        assert_eq!(gglr(&prior, x.channel(0)).unwrap(), 0.0);
        assert!(gglr(&prior, &[1.0]).is_err());
    }

    #[test]
    fn glr_prior_edge_count_and_ramp_ordering() {
        let x = Patch::gray(2, vec![0.1, 0.4, 0.2, 0.9]).unwrap();
        let f = compute_features(&x, &FeatureConfig::default());
        let l = build_glr_prior(&x, &f, &KernelParams::default()).unwrap();
        let off = l.triplets().filter(|&(i, j, _)| i < j).count();
        assert_eq!(off, 4);

        let ramp = Patch::from_fn(6, |r, _| 0.05 * r as f64);
        let f = compute_features(&ramp, &FeatureConfig::default());
        let p = KernelParams::default();
        let glr = build_glr_prior(&ramp, &f, &p).unwrap().quad_form(ramp.channel(0)).unwrap();
        let prior = build_prior(&ramp, &f, &p, Normalization::Combinatorial).unwrap();
        let gg = gglr(&prior, ramp.channel(0)).unwrap();
        assert!(glr > 0.0);
        assert!(gg.abs() < 1e-12);
        assert!(glr > gg);

        let flat = Patch::gray(3, vec![0.5; 9]).unwrap();
        let f = compute_features(&flat, &FeatureConfig::default());
        let l = build_glr_prior(&flat, &f, &p).unwrap();
        assert!(l.quad_form(flat.channel(0)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn selectors_partition_pixels() {
        let n = 4;
        let mut sh = DMatrix::zeros(n * n, n * n);
        let mut sg = DMatrix::zeros(n * n, n * n);
        for k in 1..=n {
            let h = row_selector(n, k).unwrap().to_dense();
            let g = col_selector(n, k).unwrap().to_dense();
            sh += h.transpose() * h;
            sg += g.transpose() * g;
        }
        assert_eq!(sh, DMatrix::identity(n * n, n * n));
        assert_eq!(sg, DMatrix::identity(n * n, n * n));
    }
}
