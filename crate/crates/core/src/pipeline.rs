//! Whole-image restoration: sliding-window patches, per-patch solves and
//! uniform overlap averaging.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::features::{features_from_plane, FeatureConfig};
use crate::formation::{FormationModel, Kernel};
use crate::graph::KernelParams;
use crate::metrics;
use crate::prior::{build_prior_from_plane, glr_terms, luminance, GngPrior, Normalization, Patch, PriorOptions};
use crate::solvers::admm::{solve_channels, AdmmConfig, LayerResidual, PriorSource, SolverFamily};

pub const DEFAULT_PATCH: usize = 36;
pub const DEFAULT_STRIDE: usize = 32;
/// Patch side used for deblurring when the kernel radius exceeds
/// [`LARGE_KERNEL_RADIUS`].
pub const DEBLUR_PATCH: usize = 64;
pub const LARGE_KERNEL_RADIUS: usize = 4;

/// Channel-planar image with row-major [0, 1] intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: Vec<Vec<f64>>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if channels.len() != 1 && channels.len() != 3 {
            return Err(Error::invalid(format!("images have 1 or 3 channels, got {}", channels.len())));
        }
        for c in &channels {
            check_dim(width * height, c.len())?;
        }
        Ok(Self { width, height, channels })
    }

    pub fn gray(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, vec![data])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..width * height).map(|i| f(i / width, i % width)).collect();
        Self { width, height, channels: vec![data] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
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

    pub fn channels_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.channels
    }

    pub fn luminance(&self) -> Vec<f64> {
        luminance(&self.channels)
    }

    pub fn clamped(&self) -> Self {
        let channels = self.channels.iter().map(|c| c.iter().map(|v| v.clamp(0.0, 1.0)).collect()).collect();
        Self { channels, ..*self }
    }

    /// Applies `f` to every channel plane.
    pub fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let channels = self.channels.iter().map(|c| f(c)).collect::<Result<Vec<_>>>()?;
        Self::new(self.width, self.height, channels)
    }

    fn extract(&self, origin: Origin, size: usize) -> Patch {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let mut out = Vec::with_capacity(size * size);
                for r in origin.row..origin.row + size {
                    let start = r * self.width + origin.col;
                    out.extend_from_slice(&c[start..start + size]);
                }
                out
            })
            .collect();
        Patch::new(size, channels).expect("window lies inside the image")
    }
}

/// Top-left corner of a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Origin {
    pub row: usize,
    pub col: usize,
}

/// Window starts along one axis: multiples of `stride`, plus a final window
/// flush with the far edge.
pub fn window_starts(len: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|&s| s + size <= len).collect();
    if out.last().is_some_and(|&s| s + size < len) {
        out.push(len - size);
    }
    out
}

fn check_geometry(width: usize, height: usize, size: usize, stride: usize) -> Result<()> {
    if size == 0 || stride == 0 || stride > size {
        return Err(Error::invalid(format!("need 1 <= stride <= size, got size {size}, stride {stride}")));
    }
    if size > width.min(height) {
        return Err(Error::invalid(format!("{width}x{height} image is smaller than the {size}x{size} patch")));
    }
    Ok(())
}

/// Window origins in row-major order.
pub fn patch_origins(width: usize, height: usize, size: usize, stride: usize) -> Result<Vec<Origin>> {
    check_geometry(width, height, size, stride)?;
    let cols = window_starts(width, size, stride);
    Ok(window_starts(height, size, stride)
        .into_iter()
        .flat_map(|row| cols.iter().map(move |&col| Origin { row, col }))
        .collect())
}

pub fn patchify(img: &Image, size: usize, stride: usize) -> Result<Vec<(Origin, Patch)>> {
    Ok(patch_origins(img.width, img.height, size, stride)?.into_iter().map(|o| (o, img.extract(o, size))).collect())
}

/// Per-pixel mean of all patches covering it, accumulated in the given
/// order as a running mean (so equal contributions reproduce exactly).
pub fn aggregate(patches: &[(Origin, Patch)], width: usize, height: usize) -> Result<Image> {
    let first = patches.first().ok_or(Error::UncoveredPixel { row: 0, col: 0 })?;
    let nc = first.1.channel_count();
    let mut acc = vec![vec![0.0; width * height]; nc];
    let mut count = vec![0u32; width * height];
    for (o, p) in patches {
        let s = p.side();
        if p.channel_count() != nc {
            return Err(Error::invalid("patches disagree on channel count"));
        }
        if o.row + s > height || o.col + s > width {
            return Err(Error::IndexOutOfRange { index: (o.row + s).max(o.col + s), max: width.max(height) });
        }
        for r in 0..s {
            for c in 0..s {
                let i = (o.row + r) * width + o.col + c;
                count[i] += 1;
                let k = count[i] as f64;
                for (a, ch) in acc.iter_mut().zip(p.channels()) {
                    a[i] += (ch[r * s + c] - a[i]) / k;
                }
            }
        }
    }
    if let Some(i) = count.iter().position(|&k| k == 0) {
        return Err(Error::UncoveredPixel { row: i / width, col: i % width });
    }
    Image::new(width, height, acc)
}

/// Image-level degradation operator.
#[derive(Clone, Debug, PartialEq)]
pub enum Degradation {
    Identity,
    /// Keep-mask over `width * height` pixels, shared by all channels.
    /// Missing pixels of the observed image are ignored.
    Mask(Vec<bool>),
    Blur(Kernel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Denoise,
    Interpolate,
    Deblur,
}

impl Task {
    pub fn of(d: &Degradation) -> Self {
        match d {
            Degradation::Identity => Self::Denoise,
            Degradation::Mask(_) => Self::Interpolate,
            Degradation::Blur(_) => Self::Deblur,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Denoise => "denoise",
            Self::Interpolate => "interpolate",
            Self::Deblur => "deblur",
        }
    }
}

impl Degradation {
    /// Applies the operator to a clean image. Masked-out pixels are set to 0.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        match self {
            Self::Identity => Ok(img.clone()),
            Self::Mask(keep) => {
                check_dim(img.width * img.height, keep.len())?;
                img.map_channels(|c| Ok(c.iter().zip(keep).map(|(v, &k)| if k { *v } else { 0.0 }).collect()))
            }
            Self::Blur(kernel) => {
                let m = FormationModel::blur(kernel.clone(), img.height, img.width)?;
                img.map_channels(|c| m.apply(c))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PriorKind {
    #[default]
    Gglr,
    /// Pixel-graph GLR baseline.
    Glr,
}

/// Prior-side parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorConfig {
    pub kind: PriorKind,
    pub kernel: KernelParams,
    pub features: FeatureConfig,
    pub normalization: Normalization,
    pub mu: f64,
    pub mu_tilde: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            kind: PriorKind::Gglr,
            kernel: KernelParams::default(),
            features: FeatureConfig::default(),
            normalization: Normalization::Combinatorial,
            mu: 0.5,
            mu_tilde: 0.5,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        for (name, v) in [("mu", self.mu), ("mu_tilde", self.mu_tilde)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Builds the prior of a `side x side` patch from a luminance estimate.
    pub fn build(&self, lum: &[f64], side: usize, keep_components: bool) -> Result<GngPrior> {
        let features = features_from_plane(lum, side, side, &self.features);
        match self.kind {
            PriorKind::Gglr => {
                let opts = PriorOptions { normalization: self.normalization, keep_components };
                Ok(build_prior_from_plane(lum, side, &features, &self.kernel, opts)?
                    .with_weights(self.mu, self.mu_tilde))
            }
            PriorKind::Glr => {
                let (h, v) = glr_terms(lum, side, &features, &self.kernel)?;
                let prior = GngPrior::from_glr(h, v, self.mu)?;
                Ok(if keep_components { prior } else { prior.without_components() })
            }
        }
    }
}

/// Restoration job parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestoreConfig {
    pub admm: AdmmConfig,
    pub prior: PriorConfig,
    pub patch: usize,
    pub stride: usize,
    /// Worker threads for patch solves; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for RestoreConfig {
    fn default() -> Self {
        Self {
            admm: AdmmConfig::default(),
            prior: PriorConfig::default(),
            patch: DEFAULT_PATCH,
            stride: DEFAULT_STRIDE,
            threads: None,
        }
    }
}

impl RestoreConfig {
    /// Patch side and stride actually used for `d` on a `width x height`
    /// image: large blur kernels switch to 64-pixel tiles with 50% overlap.
    /// Both are clamped to the smaller image side.
    pub fn geometry(&self, d: &Degradation, width: usize, height: usize) -> (usize, usize) {
        let (mut size, mut stride) = (self.patch, self.stride);
        if let Degradation::Blur(k) = d {
            if k.radius() > LARGE_KERNEL_RADIUS {
                size = size.max(DEBLUR_PATCH);
                stride = size / 2;
            }
        }
        let side = width.min(height);
        if size > side {
            size = side;
            stride = stride.min(size);
        }
        (size, stride)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestoreReport {
    pub task: Task,
    pub patch_count: usize,
    /// Residual history per patch, in window order.
    pub residuals: Vec<Vec<LayerResidual>>,
    pub seconds: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

impl RestoreReport {
    /// Records PSNR and SSIM of `restored` against `reference`.
    pub fn score(&mut self, restored: &Image, reference: &Image) -> Result<()> {
        self.psnr = Some(metrics::psnr(restored, reference)?);
        self.ssim = Some(metrics::ssim(restored, reference)?);
        Ok(())
    }
}

struct PatchPrior<'a> {
    cfg: &'a PriorConfig,
    side: usize,
    keep_components: bool,
}

impl PriorSource for PatchPrior<'_> {
    fn build(&self, estimates: &[Vec<f64>]) -> Result<GngPrior> {
        self.cfg.build(&luminance(estimates), self.side, self.keep_components)
    }
}

/// Fills unobserved samples of a `side x side` plane with a least-squares
/// plane fit over the observed samples of the smallest square neighbourhood
/// that determines one. Exact on planar data.
pub fn fill_missing(plane: &[f64], keep: &[bool], side: usize) -> Vec<f64> {
    let observed: Vec<f64> = plane.iter().zip(keep).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
    let fallback = if observed.is_empty() { 0.0 } else { observed.iter().sum::<f64>() / observed.len() as f64 };
    let mut out = plane.to_vec();
    for i in 0..plane.len() {
        if keep[i] {
            continue;
        }
        let (r0, c0) = ((i / side) as isize, (i % side) as isize);
        out[i] = (1..side as isize).find_map(|rad| plane_fit(plane, keep, side, r0, c0, rad)).unwrap_or(fallback);
    }
    out
}

fn plane_fit(plane: &[f64], keep: &[bool], side: usize, r0: isize, c0: isize, rad: isize) -> Option<f64> {
    let n = side as isize;
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    let mut count = 0;
    for r in (r0 - rad).max(0)..=(r0 + rad).min(n - 1) {
        for c in (c0 - rad).max(0)..=(c0 + rad).min(n - 1) {
            let j = (r * n + c) as usize;
            if !keep[j] {
                continue;
            }
            let a = nalgebra::Vector3::new(1.0, (r - r0) as f64, (c - c0) as f64);
            ata += a * a.transpose();
            atb += a * plane[j];
            count += 1;
        }
    }
    if count < 3 {
        return None;
    }
    let scale = ata[(0, 0)] * ata[(1, 1)].max(1.0) * ata[(2, 2)].max(1.0);
    if ata.determinant().abs() <= 1e-9 * scale {
        return None;
    }
    ata.lu().solve(&atb).map(|coef| coef[0])
}

struct PatchResult {
    channels: Vec<Vec<f64>>,
    history: Vec<LayerResidual>,
}

fn solve_patch(
    observed: &Patch,
    keep: Option<&[bool]>,
    kernel: Option<&Kernel>,
    cfg: &RestoreConfig,
) -> Result<PatchResult> {
    let side = observed.side();
    let (model, ys, init) = match (keep, kernel) {
        (Some(keep), _) => {
            let ys: Vec<Vec<f64>> = observed
                .channels()
                .iter()
                .map(|c| c.iter().zip(keep).filter(|(_, &k)| k).map(|(v, _)| *v).collect())
                .collect();
            let init = observed.channels().iter().map(|c| fill_missing(c, keep, side)).collect();
            (FormationModel::mask(keep.to_vec()), ys, init)
        }
        (None, Some(k)) => {
            (FormationModel::blur(k.clone(), side, side)?, observed.channels().to_vec(), observed.channels().to_vec())
        }
        (None, None) => {
            (FormationModel::identity(side * side), observed.channels().to_vec(), observed.channels().to_vec())
        }
    };
    let source = PatchPrior { cfg: &cfg.prior, side, keep_components: cfg.admm.family == SolverFamily::Aux4 };
    let prior = source.build(&init)?;
    let out = solve_channels(&ys, &model, &init, prior, &cfg.admm, Some(&source))?;
    Ok(PatchResult { channels: out.x, history: out.history })
}

/// Restores a degraded image patch by patch. One graph per patch is built
/// from the luminance of the initial estimate and shared by all channels;
/// the output is clamped to [0, 1].
pub fn restore(img: &Image, degradation: &Degradation, cfg: &RestoreConfig) -> Result<(Image, RestoreReport)> {
    cfg.admm.validate()?;
    cfg.prior.validate()?;
    let start = Instant::now();
    let (w, h) = (img.width, img.height);
    if let Degradation::Mask(keep) = degradation {
        check_dim(w * h, keep.len())?;
    }
    let (size, stride) = cfg.geometry(degradation, w, h);
    let windows = patchify(img, size, stride)?;
    let keep_mask = match degradation {
        Degradation::Mask(keep) => {
            let mask_img = Image::gray(w, h, keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect())?;
            Some(patchify(&mask_img, size, stride)?)
        }
        _ => None,
    };
    let kernel = match degradation {
        Degradation::Blur(k) => Some(k),
        _ => None,
    };

    let job = |i: usize| -> Result<PatchResult> {
        let keep: Option<Vec<bool>> = keep_mask.as_ref().map(|m| m[i].1.channel(0).iter().map(|&v| v > 0.5).collect());
        solve_patch(&windows[i].1, keep.as_deref(), kernel, cfg)
    };
    let run = || (0..windows.len()).into_par_iter().map(job).collect::<Vec<_>>();
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut restored = Vec::with_capacity(windows.len());
    let mut residuals = Vec::with_capacity(windows.len());
    for ((origin, _), res) in windows.iter().zip(results) {
        let res = res?;
        restored.push((*origin, Patch::new(size, res.channels)?));
        residuals.push(res.history);
    }
    let out = aggregate(&restored, w, h)?.clamped();
    let report = RestoreReport {
        task: Task::of(degradation),
        patch_count: restored.len(),
        residuals,
        seconds: start.elapsed().as_secs_f64(),
        psnr: None,
        ssim: None,
    };
    Ok((out, report))
}
