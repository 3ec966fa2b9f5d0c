//! Image quality metrics on [0, 1]-scaled images.

use crate::error::{Error, Result};
use crate::pipeline::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channel_count() != b.channel_count() {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channel_count(),
            b.width(),
            b.height(),
            b.channel_count()
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let mut acc = 0.0;
    let mut n = 0usize;
    for (ca, cb) in a.channels().iter().zip(b.channels()) {
        acc += ca.iter().zip(cb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        n += ca.len();
    }
    Ok(acc / n as f64)
}

/// `10 log10(1 / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

/// PSNR between two raw [0, 1] signals.
pub fn psnr_slices(a: &[f64], b: &[f64]) -> f64 {
    let m = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if m == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB)
    }
}

/// Mean SSIM over all 8x8 windows (stride 1) and channels, with uniform
/// window weights and `C1 = 0.01^2`, `C2 = 0.03^2`. Images smaller than the
/// window are treated as a single window.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let (w, h) = (a.width(), a.height());
    let (ww, wh) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
    let mut total = 0.0;
    let mut count = 0usize;
    for (ca, cb) in a.channels().iter().zip(b.channels()) {
        for r0 in 0..=h - wh {
            for c0 in 0..=w - ww {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in r0..r0 + wh {
                    for c in c0..c0 + ww {
                        let (x, y) = (ca[r * w + c], cb[r * w + c]);
                        sa += x;
                        sb += y;
                        saa += x * x;
                        sbb += y * y;
                        sab += x * y;
                    }
                }
                let n = (ww * wh) as f64;
                let (ma, mb) = (sa / n, sb / n);
                let va = (saa / n - ma * ma).max(0.0);
                let vb = (sbb / n - mb * mb).max(0.0);
                let cov = sab / n - ma * mb;
                total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
