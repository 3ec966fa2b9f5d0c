//! Quick invariant suites, runnable from a release binary.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::features::{features_from_plane, FeatureConfig};
use crate::formation::{make_gaussian_kernel, make_mask, FormationModel};
use crate::graph::{laplacian, random_walk_laplacian, tse_dc_gain, tse_filter, Graph, KernelParams};
use crate::linalg::{dot, rel_err};
use crate::pipeline::{aggregate, patchify, Image};
use crate::prior::{build_prior_from_plane, gng_laplacian, grad_op, GngPrior, PriorOptions};
use crate::solvers::admm::{direct_solve, solve_channels, z_operators, AdmmConfig, SolverFamily};
use crate::solvers::cg::cg_solve;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Suite = fn(&mut ChaCha8Rng) -> Result<(bool, String)>;

const SUITES: [(&str, Suite); 7] = [
    ("line-null-space", line_null_space),
    ("prior-psd", prior_psd),
    ("cg-oracle", cg_oracle),
    ("adjoint", adjoint),
    ("solver-equivalence", solver_equivalence),
    ("tse-decay", tse_decay),
    ("patch-round-trip", patch_round_trip),
];

/// Runs every suite with a fixed seed. A suite that errors counts as failed.
pub fn run_all() -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|(name, f)| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
            match f(&mut rng) {
                Ok((passed, detail)) => SuiteResult { name, passed, detail },
                Err(e) => SuiteResult { name, passed: false, detail: format!("error: {e}") },
            }
        })
        .collect()
}

fn sym_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn random_plane(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn line_null_space(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = f64::INFINITY;
    for _ in 0..50 {
        let n = rng.random_range(3..=8);
        let w: Vec<f64> = (0..n - 2).map(|_| rng.random_range(0.05..2.0)).collect();
        let l = gng_laplacian(&laplacian(&Graph::path(&w)?), &grad_op(n)?)?;
        let ev = sym_eigenvalues(l.to_dense());
        if ev[0].abs() >= 1e-9 || ev[1].abs() >= 1e-9 {
            return Ok((false, format!("n={n}: null eigenvalues {:e}, {:e}", ev[0], ev[1])));
        }
        worst = worst.min(ev[2]);
    }
    Ok((worst > 1e-6, format!("smallest third eigenvalue {worst:.3e}")))
}

fn prior_psd(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = f64::INFINITY;
    for _ in 0..20 {
        let n = rng.random_range(4..=6);
        let x = random_plane(rng, n);
        let f = features_from_plane(&x, n, n, &FeatureConfig::default());
        let opts = PriorOptions { keep_components: true, ..Default::default() };
        let prior = build_prior_from_plane(&x, n, &f, &KernelParams::default(), opts)?;
        let mut mats = vec![prior.inline.clone(), prior.cross.clone()];
        for family in [SolverFamily::Aux1, SolverFamily::Aux2, SolverFamily::Aux4] {
            let cfg = AdmmConfig { family, ..Default::default() };
            mats.extend(z_operators(&prior, &cfg)?);
        }
        for m in mats {
            worst = worst.min(sym_eigenvalues(m.to_dense())[0]);
        }
    }
    Ok((worst >= -1e-10, format!("min eigenvalue {worst:.3e}")))
}

fn cg_oracle(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(5..=60);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = cg_solve(&m, &b, None, 10 * n, 1e-12)?;
        let want = m.clone().lu().solve(&DVector::from_vec(b.clone())).expect("nonsingular");
        let r = &m * DVector::from_vec(want.as_slice().to_vec()) - DVector::from_vec(b.clone());
        worst = worst.max(out.rel_residual).max(r.norm() / DVector::from_vec(b).norm());
    }
    Ok((worst <= 1e-8, format!("max relative residual {worst:.3e}")))
}

fn adjoint(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let n = 9;
    let models = [
        FormationModel::identity(n * n),
        FormationModel::mask(make_mask(n * n, 0.5, 3)?),
        FormationModel::blur(make_gaussian_kernel(3, 1.0)?, n, n)?,
    ];
    let mut worst: f64 = 0.0;
    for m in &models {
        for _ in 0..20 {
            let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..m.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = dot(&m.apply(&x)?, &y);
            let rhs = dot(&x, &m.adjoint(&y)?);
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        }
    }
    Ok((worst < 1e-12, format!("max adjoint mismatch {worst:.3e}")))
}

fn solver_equivalence(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let n = 5;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x = random_plane(rng, n);
        let f = features_from_plane(&x, n, n, &FeatureConfig::default());
        let opts = PriorOptions { keep_components: true, ..Default::default() };
        let prior: GngPrior = build_prior_from_plane(&x, n, &f, &KernelParams::default(), opts)?.with_weights(0.3, 0.2);
        let m = FormationModel::identity(n * n);
        let y = random_plane(rng, n);
        let want = direct_solve(&prior, &m, &y, 1e-13)?;
        for family in [SolverFamily::Aux1, SolverFamily::Aux2, SolverFamily::Aux4] {
            let cfg = AdmmConfig {
                family,
                outer_layers: 300,
                cg_iters: n * n,
                cg_tol: 1e-13,
                relearn_graphs: false,
                ..Default::default()
            };
            let out =
                solve_channels(std::slice::from_ref(&y), &m, std::slice::from_ref(&y), prior.clone(), &cfg, None)?;
            worst = worst.max(rel_err(&out.x[0], &want));
        }
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.3e}")))
}

fn tse_decay(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let w: Vec<f64> = (0..9).map(|_| rng.random_range(0.1..1.0)).collect();
        let l_rw = random_walk_laplacian(&laplacian(&Graph::path(&w)?))?;
        let dense = l_rw.to_dense();
        let err = |mu: f64| -> Result<f64> {
            let exact = (DMatrix::identity(10, 10) + &dense * mu).try_inverse().expect("invertible");
            Ok(crate::linalg::spectral_norm(&(tse_filter(&l_rw, mu)? - exact)))
        };
        for mu in [0.2, 0.1] {
            worst = worst.max(err(mu / 2.0)? / err(mu)?);
        }
    }
    let gain_ok = (tse_dc_gain(0.2) - 1.4 / 1.44).abs() < 1e-15;
    Ok((worst <= 0.35 && gain_ok, format!("max err ratio {worst:.4}")))
}

fn patch_round_trip(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let (w, h) = (rng.random_range(40..80), rng.random_range(40..80));
    let img = Image::gray(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let back = aggregate(&patchify(&img, 36, 32)?, w, h)?;
    Ok((back == img, format!("{w}x{h}")))
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_suites_pass() {
        for r in super::run_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
