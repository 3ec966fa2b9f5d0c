//! Seeded synthetic test images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pipeline::Image;

/// `a + b r + c col` over a `width x height` grid.
pub fn plane(width: usize, height: usize, a: f64, b: f64, c: f64) -> Image {
    Image::from_fn(width, height, |r, col| a + b * r as f64 + c * col as f64)
}

/// Piecewise-planar image: a Voronoi partition into `regions` cells, each
/// carrying its own plane, clamped to [0, 1].
pub fn piecewise_planar(width: usize, height: usize, regions: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = regions.max(1);
    let cells: Vec<([f64; 2], [f64; 3])> = (0..regions)
        .map(|_| {
            let site = [rng.random_range(0.0..height as f64), rng.random_range(0.0..width as f64)];
            let coef = [rng.random_range(0.15..0.85), rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)];
            (site, coef)
        })
        .collect();
    let span = width.max(height) as f64;
    Image::from_fn(width, height, |r, c| {
        let (rf, cf) = (r as f64, c as f64);
        let (_, coef) = cells
            .iter()
            .min_by(|a, b| {
                let da = (a.0[0] - rf).powi(2) + (a.0[1] - cf).powi(2);
                let db = (b.0[0] - rf).powi(2) + (b.0[1] - cf).powi(2);
                da.total_cmp(&db)
            })
            .expect("at least one region");
        (coef[0] + coef[1] * (rf / span - 0.5) + coef[2] * (cf / span - 0.5)).clamp(0.0, 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_in_range() {
        let a = piecewise_planar(30, 20, 5, 3);
        assert_eq!(a, piecewise_planar(30, 20, 5, 3));
        assert_ne!(a, piecewise_planar(30, 20, 5, 4));
        assert!(a.channel(0).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn plane_values() {
        let p = plane(3, 2, 0.1, 0.2, 0.3);
        assert!((p.channel(0)[5] - (0.1 + 0.2 + 0.6)).abs() < 1e-15);
    }
}
