//! Grid-based coordinate descent over restoration parameters.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::pipeline::{restore, Degradation, Image, RestoreConfig};

/// Tunable parameters, in search order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Param {
    Rho,
    RhoTilde,
    Mu,
    MuTilde,
    SigmaF,
    SigmaX,
    SigmaA,
}

impl Param {
    pub const ALL: [Param; 7] =
        [Param::Rho, Param::RhoTilde, Param::Mu, Param::MuTilde, Param::SigmaF, Param::SigmaX, Param::SigmaA];

    /// Config-file key.
    pub fn key(self) -> &'static str {
        match self {
            Param::Rho => "rho",
            Param::RhoTilde => "rho_tilde",
            Param::Mu => "mu",
            Param::MuTilde => "mu_tilde",
            Param::SigmaF => "sigma_f",
            Param::SigmaX => "sigma_x",
            Param::SigmaA => "sigma_a",
        }
    }

    pub fn get(self, cfg: &RestoreConfig) -> f64 {
        match self {
            Param::Rho => cfg.admm.rho,
            Param::RhoTilde => cfg.admm.rho_tilde,
            Param::Mu => cfg.prior.mu,
            Param::MuTilde => cfg.prior.mu_tilde,
            Param::SigmaF => cfg.prior.kernel.sigma_f,
            Param::SigmaX => cfg.prior.kernel.sigma_x,
            Param::SigmaA => cfg.prior.kernel.sigma_a,
        }
    }

    pub fn set(self, cfg: &mut RestoreConfig, v: f64) {
        match self {
            Param::Rho => cfg.admm.rho = v,
            Param::RhoTilde => cfg.admm.rho_tilde = v,
            Param::Mu => cfg.prior.mu = v,
            Param::MuTilde => cfg.prior.mu_tilde = v,
            Param::SigmaF => cfg.prior.kernel.sigma_f = v,
            Param::SigmaX => cfg.prior.kernel.sigma_x = v,
            Param::SigmaA => cfg.prior.kernel.sigma_a = v,
        }
    }
}

/// `center * factor^k` for `k in -steps..=steps`, ascending.
pub fn log_grid(center: f64, factor: f64, steps: usize) -> Vec<f64> {
    let s = steps as i32;
    (-s..=s).map(|k| center * factor.powi(k)).collect()
}

/// One grid per [`Param`]. An empty grid pins the parameter to its value
/// in the base configuration.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SearchSpace {
    pub grids: HashMap<Param, Vec<f64>>,
}

impl SearchSpace {
    /// Grids of `2 steps + 1` points around the values of `base`.
    pub fn around(base: &RestoreConfig, factor: f64, steps: usize) -> Self {
        Self { grids: Param::ALL.iter().map(|&p| (p, log_grid(p.get(base), factor, steps))).collect() }
    }

    pub fn with(mut self, p: Param, grid: Vec<f64>) -> Self {
        self.grids.insert(p, grid);
        self
    }

    fn grid(&self, p: Param, base: &RestoreConfig) -> Vec<f64> {
        match self.grids.get(&p) {
            Some(g) if !g.is_empty() => g.clone(),
            _ => vec![p.get(base)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub clean: Image,
    pub degraded: Image,
    pub degradation: Degradation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub config: RestoreConfig,
    /// Mean PSNR over the training pairs at `config`.
    pub psnr: f64,
    /// Distinct grid points evaluated.
    pub evaluations: usize,
}

/// Mean PSNR of `cfg` over `pairs`.
pub fn mean_psnr(pairs: &[TrainPair], cfg: &RestoreConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut total = 0.0;
    for p in pairs {
        let (out, _) = restore(&p.degraded, &p.degradation, cfg)?;
        total += psnr(&out, &p.clean)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Coordinate descent maximizing mean PSNR. Starts from the grid points
/// nearest (in log scale) to `base`, sweeps the parameters in
/// [`Param::ALL`] order and moves only on strict improvement, until a full
/// sweep changes nothing. The result is no worse than any single-coordinate
/// grid neighbour.
pub fn tune_params(pairs: &[TrainPair], base: &RestoreConfig, space: &SearchSpace) -> Result<TuneResult> {
    if pairs.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let grids: Vec<Vec<f64>> = Param::ALL.iter().map(|&p| space.grid(p, base)).collect();
    for (p, g) in Param::ALL.iter().zip(&grids) {
        if g.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("grid for {} must be positive", p.key())));
        }
    }
    let config_at = |idx: &[usize]| {
        let mut cfg = *base;
        for ((p, g), &i) in Param::ALL.iter().zip(&grids).zip(idx) {
            p.set(&mut cfg, g[i]);
        }
        cfg
    };
    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut eval = |idx: &[usize]| -> Result<f64> {
        if let Some(&v) = memo.get(idx) {
            return Ok(v);
        }
        let v = mean_psnr(pairs, &config_at(idx))?;
        memo.insert(idx.to_vec(), v);
        Ok(v)
    };

    let mut idx: Vec<usize> = Param::ALL
        .iter()
        .zip(&grids)
        .map(|(p, g)| {
            let target = p.get(base).max(f64::MIN_POSITIVE).ln();
            (0..g.len())
                .min_by(|&a, &b| (g[a].ln() - target).abs().total_cmp(&(g[b].ln() - target).abs()))
                .expect("grids are non-empty")
        })
        .collect();
    let mut best = eval(&idx)?;
    loop {
        let mut moved = false;
        for d in 0..idx.len() {
            for k in 0..grids[d].len() {
                if k == idx[d] {
                    continue;
                }
                let mut cand = idx.clone();
                cand[d] = k;
                let v = eval(&cand)?;
                if v > best {
                    best = v;
                    idx = cand;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    Ok(TuneResult { config: config_at(&idx), psnr: best, evaluations: memo.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::{add_awgn, NoiseSpec};
    use crate::synth::piecewise_planar;

    fn small_base() -> RestoreConfig {
        let mut cfg = RestoreConfig { patch: 12, stride: 12, ..Default::default() };
        cfg.admm.outer_layers = 3;
        cfg.admm.cg_iters = 5;
        cfg
    }

    fn noisy_pair(seed: u64) -> TrainPair {
        let clean = piecewise_planar(12, 12, 3, seed);
        let degraded = clean.map_channels(|c| add_awgn(c, NoiseSpec { sigma: 20.0, seed })).unwrap();
        TrainPair { clean, degraded, degradation: Degradation::Identity }
    }

    #[test]
    fn empty_training_set() {
        assert!(tune_params(&[], &small_base(), &SearchSpace::default()).is_err());
    }

    #[test]
    fn singleton_grids_echo_the_point() {
        let space = Param::ALL.iter().fold(SearchSpace::default(), |s, &p| s.with(p, vec![0.3]));
        let out = tune_params(&[noisy_pair(1)], &small_base(), &space).unwrap();
        for p in Param::ALL {
            assert_eq!(p.get(&out.config), 0.3);
        }
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn noiseless_identity_prefers_smallest_weights() {
        let clean = piecewise_planar(12, 12, 3, 5);
        let pair = TrainPair { degraded: clean.clone(), clean, degradation: Degradation::Identity };
        let grid = vec![0.01, 0.1, 1.0];
        let space = SearchSpace::default().with(Param::Mu, grid.clone()).with(Param::MuTilde, grid);
        let out = tune_params(&[pair], &small_base(), &space).unwrap();
        assert_eq!(out.config.prior.mu, 0.01);
        assert_eq!(out.config.prior.mu_tilde, 0.01);
    }

    #[test]
    fn result_is_coordinate_optimal() {
        let pairs = [noisy_pair(2)];
        let base = small_base();
        let space =
            SearchSpace::default().with(Param::Mu, log_grid(0.5, 4.0, 1)).with(Param::SigmaX, log_grid(0.1, 4.0, 1));
        let out = tune_params(&pairs, &base, &space).unwrap();
        assert!(out.psnr >= mean_psnr(&pairs, &base).unwrap());
        for (p, g) in [(Param::Mu, log_grid(0.5, 4.0, 1)), (Param::SigmaX, log_grid(0.1, 4.0, 1))] {
            for v in g {
                let mut cfg = out.config;
                p.set(&mut cfg, v);
                assert!(mean_psnr(&pairs, &cfg).unwrap() <= out.psnr);
            }
        }
    }
}
