//! Dense brute-force oracles for the sparse assembly and the solvers.

use gglr::features::{features_from_plane, FeatureConfig, FeatureField};
use gglr::formation::{make_gaussian_kernel, make_mask, FormationModel};
use gglr::graph::{glr, laplacian, spectrum, Graph, KernelParams};
use gglr::prior::{
    build_prior_from_plane, col_pair_selector, col_selector, row_pair_selector, row_selector, GngPrior, Normalization,
    PriorOptions,
};
use gglr::solvers::admm::direct_solve;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn dense_grad(len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(len - 1, len, |i, j| {
        if j == i {
            1.0
        } else if j == i + 1 {
            -1.0
        } else {
            0.0
        }
    })
}

fn dense_pair_grad(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2 * n, |i, j| {
        if j == 2 * i {
            1.0
        } else if j == 2 * i + 1 {
            -1.0
        } else {
            0.0
        }
    })
}

fn weight(fa: &[f64], fb: &[f64], ga: f64, gb: f64, p: &KernelParams) -> f64 {
    let df: f64 = fa.iter().zip(fb).map(|(a, b)| (a - b).powi(2)).sum();
    let w = (-df / p.sigma_f.powi(2) - (ga - gb).powi(2) / p.sigma_a.powi(2)).exp();
    w.max(1e-12)
}

/// Path Laplacian over gradient nodes `g` whose features are `feats`.
fn dense_path_laplacian(g: &[f64], feats: &[&[f64]], p: &KernelParams, norm: Normalization) -> DMatrix<f64> {
    let m = g.len();
    let mut l = DMatrix::zeros(m, m);
    for t in 0..m.saturating_sub(1) {
        let w = weight(feats[t], feats[t + 1], g[t], g[t + 1], p);
        l[(t, t)] += w;
        l[(t + 1, t + 1)] += w;
        l[(t, t + 1)] -= w;
        l[(t + 1, t)] -= w;
    }
    match norm {
        Normalization::Combinatorial => l,
        Normalization::RandomWalk => {
            let d_inv = DMatrix::from_fn(m, m, |i, j| if i == j && l[(i, i)] > 0.0 { 1.0 / l[(i, i)] } else { 0.0 });
            let rw = d_inv * l;
            rw.transpose() * rw
        }
    }
}

/// `S^T Fop^T Lbar Fop S` for one selector `S`.
fn dense_term(
    x: &DVector<f64>,
    sel: &DMatrix<f64>,
    fop: &DMatrix<f64>,
    feature_pixels: &[usize],
    features: &FeatureField,
    p: &KernelParams,
    norm: Normalization,
) -> DMatrix<f64> {
    let g = fop * sel * x;
    let feats: Vec<&[f64]> = feature_pixels.iter().map(|&i| features.get(i)).collect();
    let lbar = dense_path_laplacian(g.as_slice(), &feats, p, norm);
    sel.transpose() * fop.transpose() * lbar * fop * sel
}

fn dense_prior(
    x: &[f64],
    n: usize,
    features: &FeatureField,
    p: &KernelParams,
    norm: Normalization,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let xv = DVector::from_column_slice(x);
    let f = dense_grad(n);
    let ft = dense_pair_grad(n);
    let mut inline = DMatrix::zeros(n * n, n * n);
    let mut cross = DMatrix::zeros(n * n, n * n);
    for k in 1..=n {
        let row_px: Vec<usize> = (0..n - 1).map(|t| (k - 1) * n + t).collect();
        let col_px: Vec<usize> = (0..n - 1).map(|t| t * n + k - 1).collect();
        inline += dense_term(&xv, &row_selector(n, k).unwrap().to_dense(), &f, &row_px, features, p, norm);
        inline += dense_term(&xv, &col_selector(n, k).unwrap().to_dense(), &f, &col_px, features, p, norm);
    }
    for k in 1..n {
        let cp_px: Vec<usize> = (0..n).map(|t| t * n + k - 1).collect();
        let rp_px: Vec<usize> = (0..n).map(|t| (k - 1) * n + t).collect();
        cross += dense_term(&xv, &col_pair_selector(n, k).unwrap().to_dense(), &ft, &cp_px, features, p, norm);
        cross += dense_term(&xv, &row_pair_selector(n, k).unwrap().to_dense(), &ft, &rp_px, features, p, norm);
    }
    (inline, cross)
}

#[test]
fn sparse_prior_matches_dense_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = KernelParams::new(0.8, 0.1, 0.3).unwrap();
    for n in 3..=6 {
        for norm in [Normalization::Combinatorial, Normalization::RandomWalk] {
            let x: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
            let features = features_from_plane(&x, n, n, &FeatureConfig::default());
            let opts = PriorOptions { normalization: norm, keep_components: false };
            let prior = build_prior_from_plane(&x, n, &features, &p, opts).unwrap();
            let (inline, cross) = dense_prior(&x, n, &features, &p, norm);
            let scale = inline.abs().max().max(cross.abs().max()).max(1.0);
            assert!(max_abs_diff(&prior.inline.to_dense(), &inline) < 1e-12 * scale, "inline n={n} {norm:?}");
            assert!(max_abs_diff(&prior.cross.to_dense(), &cross) < 1e-12 * scale, "cross n={n} {norm:?}");
        }
    }
}

#[test]
fn glr_matches_explicit_edge_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let nodes = rng.random_range(2..=50);
        let mut edges = Vec::new();
        for i in 0..nodes {
            for j in i + 1..nodes {
                if rng.random_bool(0.2) {
                    edges.push((i, j, rng.random_range(0.01..2.0)));
                }
            }
        }
        let x: Vec<f64> = (0..nodes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let brute: f64 = edges.iter().map(|&(i, j, w)| w * (x[i] - x[j]).powi(2)).sum();
        let l = laplacian(&Graph::new(nodes, edges).unwrap());
        assert!((glr(&l, &x).unwrap() - brute).abs() < 1e-12 * brute.max(1.0));
    }
}

fn dense_model(m: &FormationModel) -> DMatrix<f64> {
    let n = m.input_dim();
    let mut a = DMatrix::zeros(m.output_dim(), n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        a.set_column(j, &DVector::from_vec(m.apply(&e).unwrap()));
    }
    a
}

#[test]
fn adjoint_matches_dense_transpose() {
    let n = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for m in [
        FormationModel::identity(n * n),
        FormationModel::mask(make_mask(n * n, 0.4, 2).unwrap()),
        FormationModel::blur(make_gaussian_kernel(5, 1.2).unwrap(), n, n).unwrap(),
    ] {
        let a = dense_model(&m);
        let y: Vec<f64> = (0..m.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let want = a.transpose() * DVector::from_vec(y.clone());
        let got = m.adjoint(&y).unwrap();
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-13);
        }
    }
}

#[test]
fn direct_solve_matches_dense_lu() {
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = KernelParams::default();
    for m in [
        FormationModel::identity(n * n),
        FormationModel::mask(make_mask(n * n, 0.5, 4).unwrap()),
        FormationModel::blur(make_gaussian_kernel(3, 0.8).unwrap(), n, n).unwrap(),
    ] {
        let x: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let features = features_from_plane(&x, n, n, &FeatureConfig::default());
        let prior: GngPrior =
            build_prior_from_plane(&x, n, &features, &p, PriorOptions::default()).unwrap().with_weights(0.4, 0.3);
        let y = m.apply(&x).unwrap();
        let a = dense_model(&m);
        let lhs = a.transpose() * &a + prior.inline.to_dense() * 0.4 + prior.cross.to_dense() * 0.3;
        let rhs = a.transpose() * DVector::from_vec(y.clone());
        let want = lhs.clone().lu().solve(&rhs).unwrap();
        let got = DVector::from_vec(direct_solve(&prior, &m, &y, 1e-13).unwrap());
        let residual = (&lhs * &got - &rhs).norm() / rhs.norm();
        let err = (&got - &want).norm() / want.norm();
        assert!(residual < 1e-12, "relative residual {residual}");
        assert!(err < 1e-6, "relative error {err}");
    }
}

#[test]
fn spectrum_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w: Vec<f64> = (0..30).map(|_| rng.random_range(0.1..1.0)).collect();
    let l = laplacian(&Graph::path(&w).unwrap());
    let got = spectrum(&l, 31).unwrap();
    let mut want: Vec<f64> = l.to_dense().symmetric_eigenvalues().iter().copied().collect();
    want.sort_by(f64::total_cmp);
    for (g, w) in got.iter().zip(&want) {
        assert!((g.value - w).abs() < 1e-10);
    }
    let v = DMatrix::from_fn(31, 31, |i, j| got[j].vector[i]);
    let lam = DMatrix::from_diagonal(&DVector::from_iterator(31, got.iter().map(|e| e.value)));
    assert!(max_abs_diff(&(&v * lam * v.transpose()), &l.to_dense()) < 1e-8);
}
