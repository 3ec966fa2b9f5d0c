//! Linear image formation `y = A x + n` and degradation synthesis.
//!
//! `A` is the identity for denoising, a sampling (mask) matrix for
//! interpolation, or a convolution with a known kernel for non-blind
//! deblurring. Every variant exposes `A`, `A^T` and `A^T A` as matrix-free
//! maps.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};

/// 2-D convolution stencil with odd dimensions, centered.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel dimensions must be odd, got {rows}x{cols}")));
        }
        check_dim(rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("kernel has non-finite entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Largest distance from the center tap to an edge tap.
    pub fn radius(&self) -> usize {
        self.rows.max(self.cols) / 2
    }

    /// Parses the stencil text format: a `rows cols` header followed by
    /// `rows * cols` whitespace-separated reals in row-major order.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format { what: "kernel stencil", detail };
        let mut tokens = text.split_whitespace();
        let mut dim = |name: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| bad(format!("missing {name}")))?
                .parse()
                .map_err(|e| bad(format!("{name}: {e}")))
        };
        let rows = dim("rows")?;
        let cols = dim("cols")?;
        let data =
            tokens.map(|t| t.parse::<f64>().map_err(|e| bad(format!("{t:?}: {e}")))).collect::<Result<Vec<_>>>()?;
        if data.len() != rows * cols {
            return Err(bad(format!("expected {} values, found {}", rows * cols, data.len())));
        }
        Self::new(rows, cols, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| format!("{:e}", self.at(r, c))).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Normalized, symmetric Gaussian stencil of odd `size`.
pub fn make_gaussian_kernel(size: usize, std: f64) -> Result<Kernel> {
    if size.is_multiple_of(2) {
        return Err(Error::invalid(format!("kernel size must be odd, got {size}")));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::invalid(format!("kernel std must be positive, got {std}")));
    }
    let c = (size / 2) as f64;
    let mut data: Vec<f64> = (0..size * size)
        .map(|i| {
            let (dr, dc) = ((i / size) as f64 - c, (i % size) as f64 - c);
            (-(dr * dr + dc * dc) / (2.0 * std * std)).exp()
        })
        .collect();
    let total: f64 = data.iter().sum();
    data.iter_mut().for_each(|v| *v /= total);
    Kernel::new(size, size, data)
}

/// The degradation operator `A` acting on one row-major plane.
#[derive(Clone, Debug, PartialEq)]
pub enum FormationModel {
    Identity {
        dim: usize,
    },
    /// Observation is the compacted subvector of kept samples.
    Mask {
        keep: Vec<bool>,
    },
    /// Convolution with symmetric (half-sample reflective) boundary padding.
    Blur {
        kernel: Kernel,
        rows: usize,
        cols: usize,
    },
}

fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

impl FormationModel {
    pub fn identity(dim: usize) -> Self {
        Self::Identity { dim }
    }

    pub fn mask(keep: Vec<bool>) -> Self {
        Self::Mask { keep }
    }

    pub fn blur(kernel: Kernel, rows: usize, cols: usize) -> Result<Self> {
        if kernel.rows() > rows || kernel.cols() > cols {
            return Err(Error::invalid(format!(
                "{}x{} kernel is larger than the {rows}x{cols} plane",
                kernel.rows(),
                kernel.cols()
            )));
        }
        Ok(Self::Blur { kernel, rows, cols })
    }

    /// Length of `x`.
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Mask { keep } => keep.len(),
            Self::Blur { rows, cols, .. } => rows * cols,
        }
    }

    /// Length of `y`.
    pub fn output_dim(&self) -> usize {
        match self {
            Self::Mask { keep } => keep.iter().filter(|&&k| k).count(),
            _ => self.input_dim(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        Ok(match self {
            Self::Identity { .. } => x.to_vec(),
            Self::Mask { keep } => x.iter().zip(keep).filter(|(_, &k)| k).map(|(v, _)| *v).collect(),
            Self::Blur { kernel, rows, cols } => {
                let mut out = vec![0.0; x.len()];
                convolve(kernel, *rows, *cols, x, &mut out);
                out
            }
        })
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.output_dim(), y.len())?;
        Ok(match self {
            Self::Identity { .. } => y.to_vec(),
            Self::Mask { keep } => {
                let mut it = y.iter();
                keep.iter().map(|&k| if k { *it.next().expect("count checked") } else { 0.0 }).collect()
            }
            Self::Blur { kernel, rows, cols } => {
                let mut out = vec![0.0; y.len()];
                convolve_adjoint(kernel, *rows, *cols, y, &mut out);
                out
            }
        })
    }

    /// `A^T A x`
    pub fn gram_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut out = vec![0.0; x.len()];
        self.gram_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn gram_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Identity { .. } => out.copy_from_slice(x),
            Self::Mask { keep } => {
                for ((o, v), &k) in out.iter_mut().zip(x).zip(keep) {
                    *o = if k { *v } else { 0.0 };
                }
            }
            Self::Blur { kernel, rows, cols } => {
                let mut tmp = vec![0.0; x.len()];
                convolve(kernel, *rows, *cols, x, &mut tmp);
                convolve_adjoint(kernel, *rows, *cols, &tmp, out);
            }
        }
    }
}

/// `out[r, c] = sum_(a, b) k[a, b] x[r - a + cr, c - b + cc]` with reflected borders.
fn convolve(k: &Kernel, rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    let (cr, cc) = ((k.rows / 2) as isize, (k.cols / 2) as isize);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for a in 0..k.rows {
                let rr = reflect(r as isize - a as isize + cr, rows);
                for b in 0..k.cols {
                    let cc2 = reflect(c as isize - b as isize + cc, cols);
                    acc += k.at(a, b) * x[rr * cols + cc2];
                }
            }
            out[r * cols + c] = acc;
        }
    }
}

/// Exact transpose of [`convolve`], including the reflected borders.
fn convolve_adjoint(k: &Kernel, rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let (cr, cc) = ((k.rows / 2) as isize, (k.cols / 2) as isize);
    for r in 0..rows {
        for c in 0..cols {
            let yv = y[r * cols + c];
            for a in 0..k.rows {
                let rr = reflect(r as isize - a as isize + cr, rows);
                for b in 0..k.cols {
                    let cc2 = reflect(c as isize - b as isize + cc, cols);
                    out[rr * cols + cc2] += k.at(a, b) * yv;
                }
            }
        }
    }
}

/// Keep-mask with exactly `round(keep_fraction * n2)` ones at uniformly
/// random positions.
pub fn make_mask(n2: usize, keep_fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invalid(format!("keep fraction must be in (0, 1], got {keep_fraction}")));
    }
    let count = ((keep_fraction * n2 as f64).round() as usize).min(n2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; n2];
    for i in sample(&mut rng, n2, count) {
        keep[i] = true;
    }
    Ok(keep)
}

/// Additive white Gaussian noise, `sigma` given on the 0-255 scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Adds i.i.d. `N(0, (sigma / 255)^2)` samples to a [0, 1]-scaled signal.
pub fn add_awgn(x: &[f64], spec: NoiseSpec) -> Result<Vec<f64>> {
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {}", spec.sigma)));
    }
    if spec.sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let normal = Normal::new(0.0, spec.sigma / 255.0).expect("sigma is positive and finite");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(x.iter().map(|v| v + normal.sample(&mut rng)).collect())
}
