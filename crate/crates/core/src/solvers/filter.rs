//! Iterative signal-dependent GLR smoothing.
//!
//! Each iteration recomputes the pixel-graph edge weights from the current
//! signal and applies the truncated-Taylor low-pass filter
//! `(1 + mu)^-2 ((1 + 2 mu) I - mu L_rw)`. For small `mu` the per-sample
//! update is approximately `mu / (1 + mu)^2 (w_left grad_left - w_right grad_right)`:
//! a Perona-Malik style diffusion whose conductances are the edge weights,
//! which vanish across large jumps.

use crate::error::{check_dim, Error, Result};
use crate::features::FeatureField;
use crate::graph::{
    edge_weight, grid_edges, laplacian, random_walk_laplacian_guarded, Graph, KernelParams, WeightMode,
};

/// Applies `iters` reweighted low-pass steps to `y`, a row-major plane with
/// the geometry of `features`. Constant signals are scaled by
/// [`tse_dc_gain`](crate::graph::tse_dc_gain) per step, not renormalised.
pub fn glr_iterative_filter(
    y: &[f64],
    features: &FeatureField,
    p: &KernelParams,
    mu: f64,
    iters: usize,
) -> Result<Vec<f64>> {
    check_dim(features.len(), y.len())?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be non-negative, got {mu}")));
    }
    let edges = grid_edges(features.rows(), features.cols());
    let s = (1.0 + mu) * (1.0 + mu);
    let mut x = y.to_vec();
    let mut lx = vec![0.0; x.len()];
    for _ in 0..iters {
        if mu == 0.0 {
            break;
        }
        let weighted = edges
            .iter()
            .map(|&(i, j)| (i, j, edge_weight(features.get(i), features.get(j), x[i], x[j], p, WeightMode::Intensity)))
            .collect();
        let l = laplacian(&Graph::new(x.len(), weighted)?);
        let l_rw = random_walk_laplacian_guarded(&l);
        l_rw.mul_vec_into(&x, &mut lx);
        for (xi, li) in x.iter_mut().zip(&lx) {
            *xi = ((1.0 + 2.0 * mu) * *xi - mu * li) / s;
        }
    }
    Ok(x)
}
