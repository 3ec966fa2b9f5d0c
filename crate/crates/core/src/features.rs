//! Fixed per-pixel feature vectors for edge-weight evaluation.
//!
//! Each pixel gets `(r/N, c/N, luminance, |grad|)`, every component scaled by
//! a configurable weight. Gradient nodes reuse the feature of their left
//! (horizontal gradient) or top (vertical gradient) pixel.

use crate::error::{check_dim, Result};
use crate::prior::Patch;

pub const FEATURE_DIM: usize = 4;

/// Per-component weights applied to the raw features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureConfig {
    pub spatial: f64,
    pub luminance: f64,
    pub gradient: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { spatial: 1.0, luminance: 1.0, gradient: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureField {
    /// Wraps precomputed features, `FEATURE_DIM` values per pixel in row-major order.
    pub fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols * FEATURE_DIM, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        FEATURE_DIM
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature vector of pixel `i` (row-major index).
    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn compute_features(x: &Patch, cfg: &FeatureConfig) -> FeatureField {
    let lum = x.luminance();
    features_from_plane(&lum, x.side(), x.side(), cfg)
}

/// Features of a single-channel row-major `rows x cols` plane.
pub fn features_from_plane(plane: &[f64], rows: usize, cols: usize, cfg: &FeatureConfig) -> FeatureField {
    assert_eq!(plane.len(), rows * cols);
    let grad = gradient_magnitude(plane, rows, cols);
    let n = rows.max(cols) as f64;
    let mut data = Vec::with_capacity(rows * cols * FEATURE_DIM);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            data.push(cfg.spatial * r as f64 / n);
            data.push(cfg.spatial * c as f64 / n);
            data.push(cfg.luminance * plane[i]);
            data.push(cfg.gradient * grad[i]);
        }
    }
    FeatureField { rows, cols, data }
}

/// Finite-difference gradient magnitude: central differences inside, one-sided
/// at the borders, zero along an axis of length one.
pub fn gradient_magnitude(plane: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let at = |r: usize, c: usize| plane[r * cols + c];
    let diff = |lo: f64, hi: f64, span: usize| if span == 0 { 0.0 } else { (hi - lo) / span as f64 };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (r0, r1) = (r.saturating_sub(1), (r + 1).min(rows - 1));
        for c in 0..cols {
            let (c0, c1) = (c.saturating_sub(1), (c + 1).min(cols - 1));
            let gx = diff(at(r, c0), at(r, c1), c1 - c0);
            let gy = diff(at(r0, c), at(r1, c), r1 - r0);
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_patch_differs_only_spatially() {
        let p = Patch::gray(3, vec![0.4; 9]).unwrap();
        let f = compute_features(&p, &FeatureConfig::default());
        for i in 0..9 {
            assert_eq!(f.get(i)[2], 0.4);
            assert_eq!(f.get(i)[3], 0.0);
        }
        for i in 0..9 {
            for j in 0..9 {
                let same = f.get(i) == f.get(j);
                assert_eq!(same, i == j);
            }
        }
    }

    #[test]
    fn ramp_gradient_magnitude_is_constant() {
        // x(r, c) = 0.1 c
        let data: Vec<f64> = (0..9).map(|i| 0.1 * (i % 3) as f64).collect();
        let g = gradient_magnitude(&data, 3, 3);
        for v in g {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn intensity_offset_leaves_gradient_unchanged() {
        let data: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 * 0.1).collect();
        let shifted: Vec<f64> = data.iter().map(|v| v + 0.25).collect();
        let a = features_from_plane(&data, 4, 4, &FeatureConfig::default());
        let b = features_from_plane(&shifted, 4, 4, &FeatureConfig::default());
        for i in 0..16 {
            assert!((a.get(i)[3] - b.get(i)[3]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let data: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let a = features_from_plane(&data, 5, 5, &FeatureConfig::default());
        let b = features_from_plane(&data, 5, 5, &FeatureConfig::default());
        assert_eq!(a, b);
    }
}
