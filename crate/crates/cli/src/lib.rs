//! Command-line front end for `gglr`.
//!
//! Every restoration subcommand reads a binary PGM/PPM, restores it and
//! writes the result. With `--ref` it prints one CSV record
//! `task,aux,layers,cg_iters,psnr_db,ssim,seconds` to stdout.
//!
//! Exit codes: 0 success, 1 I/O or format failure, 2 invalid flags,
//! 3 solver failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gglr::formation::{add_awgn, make_gaussian_kernel, make_mask, Kernel, NoiseSpec};
use gglr::graph::{laplacian, random_walk_laplacian, row_sums, Graph};
use gglr::pipeline::{restore, Degradation, Image, PriorConfig, PriorKind, RestoreConfig};
use gglr::prior::{gng_laplacian, grad_op};
use gglr::solvers::tune::{mean_psnr, tune_params, Param, SearchSpace, TrainPair};
use gglr::solvers::{AdmmConfig, SolverFamily};
use gglr::{pnm, selftest, Error, Normalization, SparseSym};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// CSV columns printed for each restoration job.
pub const CSV_HEADER: &str = "task,aux,layers,cg_iters,psnr_db,ssim,seconds";

/// Null-space threshold used by `spectrum`.
pub const NULL_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "gglr", version, about = "Graph Laplacian regularized image restoration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove additive noise (optionally synthesizing it first).
    Denoise(DenoiseArgs),
    /// Fill missing pixels from a keep-mask.
    Interpolate(InterpolateArgs),
    /// Non-blind deconvolution.
    Deblur(DeblurArgs),
    /// Synthesize a degraded observation.
    Degrade(DegradeArgs),
    /// Eigenvalues of a random line gradient-graph Laplacian.
    Spectrum(SpectrumArgs),
    /// Grid search of solver and prior parameters on training pairs.
    Tune(TuneArgs),
    /// Run the built-in invariant suites.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorArg {
    Gglr,
    Glr,
}

/// Solver and prior settings shared by restoration and tuning commands.
/// Unset flags fall back to `--config`, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Auxiliary-variable count: 0 (direct solve), 1, 2 or 4.
    #[arg(long)]
    pub aux: Option<u8>,
    /// Outer layers K.
    #[arg(long)]
    pub layers: Option<usize>,
    /// CG iterations L per linear system.
    #[arg(long = "cg-iters")]
    pub cg_iters: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long = "mu-tilde")]
    pub mu_tilde: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long = "rho-tilde")]
    pub rho_tilde: Option<f64>,
    #[arg(long = "sigma-f")]
    pub sigma_f: Option<f64>,
    #[arg(long = "sigma-x")]
    pub sigma_x: Option<f64>,
    #[arg(long = "sigma-a")]
    pub sigma_a: Option<f64>,
    #[arg(long = "feature-spatial")]
    pub feature_spatial: Option<f64>,
    #[arg(long = "feature-luminance")]
    pub feature_luminance: Option<f64>,
    #[arg(long = "feature-gradient")]
    pub feature_gradient: Option<f64>,
    /// Random-walk normalized gradient graphs.
    #[arg(long)]
    pub normalized: bool,
    #[arg(long, value_enum)]
    pub prior: Option<PriorArg>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Disable per-layer graph re-learning.
    #[arg(long = "fixed-graph")]
    pub fixed_graph: bool,
    /// Worker threads for patch solves.
    #[arg(long, env = "GGLR_THREADS")]
    pub threads: Option<usize>,
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Add AWGN of this level (0-255 scale) to the input before restoring.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clean reference for the CSV metrics record.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Keep this fraction of the input pixels (random mask from `--seed`).
    #[arg(long, conflicts_with = "mask")]
    pub keep: Option<f64>,
    /// Keep-mask image (nonzero = observed); the input is already masked.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct DeblurArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Kernel text file (`rows cols` then values); Gaussian when absent.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    #[arg(long = "kernel-size", default_value_t = 5)]
    pub kernel_size: usize,
    #[arg(long = "kernel-std", default_value_t = 1.0)]
    pub kernel_std: f64,
    /// Blur the input (and add `--sigma` noise) before restoring.
    #[arg(long)]
    pub synthesize: bool,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// AWGN level on the 0-255 scale.
    #[arg(long, default_value_t = 0.0)]
    pub awgn: f64,
    /// Keep fraction of a random sampling mask.
    #[arg(long)]
    pub mask: Option<f64>,
    /// Where to write the mask (default: OUTPUT with `.mask.pgm`).
    #[arg(long = "mask-out")]
    pub mask_out: Option<PathBuf>,
    /// Blur kernel file.
    #[arg(long)]
    pub blur: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Line length (pixels), 3..=64.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Number of smallest eigenvalues to print (default: all).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use this weight for every gradient edge instead of random weights.
    #[arg(long)]
    pub weight: Option<f64>,
    /// Random-walk normalized gradient graph.
    #[arg(long)]
    pub normalized: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Directory of `NAME_clean.pgm` / `NAME_degraded.pgm` pairs (optional
    /// `NAME_mask.pgm` for interpolation).
    pub dir: PathBuf,
    /// Output config file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Grid points on each side of the start value (0 = single point).
    #[arg(long = "grid-steps", default_value_t = 1)]
    pub grid_steps: usize,
    /// Ratio between neighbouring grid points.
    #[arg(long = "grid-factor", default_value_t = 2.0)]
    pub grid_factor: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Format { .. } => EXIT_IO,
            e if e.is_solver_failure() => EXIT_SOLVER,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_context(path: &Path) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}

fn read_image(path: &Path) -> CliResult<Image> {
    pnm::read(path).map_err(io_context(path))
}

fn write_image(path: &Path, img: &Image) -> CliResult<()> {
    pnm::write(path, img).map_err(io_context(path))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

const CONFIG_KEYS: &[&str] = &[
    "aux",
    "layers",
    "cg_iters",
    "mu",
    "mu_tilde",
    "rho",
    "rho_tilde",
    "sigma_f",
    "sigma_x",
    "sigma_a",
    "feature_spatial",
    "feature_luminance",
    "feature_gradient",
    "normalized",
    "prior",
    "patch",
    "stride",
    "relearn",
    "threads",
];

struct ConfigFile(BTreeMap<String, String>);

impl ConfigFile {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self(BTreeMap::new()));
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) })?;
        let map = parse_config(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if let Some(k) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(CliError::usage(format!("{}: unknown key `{k}`", path.display())));
        }
        Ok(Self(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.0
            .get(key)
            .map(|v| v.parse().map_err(|_| CliError::usage(format!("config: invalid value `{v}` for `{key}`"))))
            .transpose()
    }
}

impl SolverArgs {
    /// Resolves flags, config file and defaults, validating everything.
    pub fn resolve(&self) -> CliResult<RestoreConfig> {
        let file = ConfigFile::load(self.config.as_deref())?;
        let pick = |flag: Option<f64>, key: &str, default: f64| -> CliResult<f64> {
            Ok(flag.or(file.get(key)?).unwrap_or(default))
        };
        let pick_usize = |flag: Option<usize>, key: &str, default: usize| -> CliResult<usize> {
            Ok(flag.or(file.get(key)?).unwrap_or(default))
        };

        let admm_d = AdmmConfig::default();
        let prior_d = PriorConfig::default();
        let base = RestoreConfig::default();

        let aux = self.aux.or(file.get("aux")?).unwrap_or(admm_d.family.aux_count());
        let family = SolverFamily::from_aux_count(aux)?;
        let prior_kind = match self.prior {
            Some(PriorArg::Glr) => PriorKind::Glr,
            Some(PriorArg::Gglr) => PriorKind::Gglr,
            None => match file.0.get("prior").map(String::as_str) {
                None | Some("gglr") => PriorKind::Gglr,
                Some("glr") => PriorKind::Glr,
                Some(other) => return Err(CliError::usage(format!("config: unknown prior `{other}`"))),
            },
        };
        let normalized = self.normalized || file.get::<bool>("normalized")?.unwrap_or(false);
        let relearn = !self.fixed_graph && file.get::<bool>("relearn")?.unwrap_or(true);

        let mut kernel = prior_d.kernel;
        kernel.sigma_f = pick(self.sigma_f, "sigma_f", kernel.sigma_f)?;
        kernel.sigma_x = pick(self.sigma_x, "sigma_x", kernel.sigma_x)?;
        kernel.sigma_a = pick(self.sigma_a, "sigma_a", kernel.sigma_a)?;
        let mut features = prior_d.features;
        features.spatial = pick(self.feature_spatial, "feature_spatial", features.spatial)?;
        features.luminance = pick(self.feature_luminance, "feature_luminance", features.luminance)?;
        features.gradient = pick(self.feature_gradient, "feature_gradient", features.gradient)?;
        for (name, v) in [
            ("feature-spatial", features.spatial),
            ("feature-luminance", features.luminance),
            ("feature-gradient", features.gradient),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::usage(format!("--{name} must be non-negative")));
            }
        }

        let cfg = RestoreConfig {
            admm: AdmmConfig {
                family,
                rho: pick(self.rho, "rho", admm_d.rho)?,
                rho_tilde: pick(self.rho_tilde, "rho_tilde", admm_d.rho_tilde)?,
                outer_layers: pick_usize(self.layers, "layers", admm_d.outer_layers)?,
                cg_iters: pick_usize(self.cg_iters, "cg_iters", admm_d.cg_iters)?,
                cg_tol: admm_d.cg_tol,
                relearn_graphs: relearn,
            },
            prior: PriorConfig {
                kind: prior_kind,
                kernel,
                features,
                normalization: if normalized { Normalization::RandomWalk } else { Normalization::Combinatorial },
                mu: pick(self.mu, "mu", prior_d.mu)?,
                mu_tilde: pick(self.mu_tilde, "mu_tilde", prior_d.mu_tilde)?,
            },
            patch: pick_usize(self.patch, "patch", base.patch)?,
            stride: pick_usize(self.stride, "stride", base.stride)?,
            threads: self.threads.or(file.get("threads")?),
        };
        cfg.admm.validate()?;
        cfg.prior.validate()?;
        if cfg.patch < 3 || cfg.stride == 0 || cfg.stride > cfg.patch {
            return Err(CliError::usage("need --patch >= 3 and 1 <= --stride <= --patch"));
        }
        if cfg.threads == Some(0) {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        Ok(cfg)
    }
}

/// Serializes the tunable settings of `cfg` in config-file syntax.
pub fn config_text(cfg: &RestoreConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "aux = {}", cfg.admm.family.aux_count());
    let _ = writeln!(s, "layers = {}", cfg.admm.outer_layers);
    let _ = writeln!(s, "cg_iters = {}", cfg.admm.cg_iters);
    for p in Param::ALL {
        let _ = writeln!(s, "{} = {}", p.key(), p.get(cfg));
    }
    let _ = writeln!(s, "feature_spatial = {}", cfg.prior.features.spatial);
    let _ = writeln!(s, "feature_luminance = {}", cfg.prior.features.luminance);
    let _ = writeln!(s, "feature_gradient = {}", cfg.prior.features.gradient);
    let _ = writeln!(s, "normalized = {}", cfg.prior.normalization == Normalization::RandomWalk);
    let prior = match cfg.prior.kind {
        PriorKind::Gglr => "gglr",
        PriorKind::Glr => "glr",
    };
    let _ = writeln!(s, "prior = {prior}");
    let _ = writeln!(s, "patch = {}", cfg.patch);
    let _ = writeln!(s, "stride = {}", cfg.stride);
    s
}

fn check_sigma(name: &str, v: f64) -> CliResult<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("--{name} must be a non-negative number")))
    }
}

fn noisy(img: &Image, sigma: f64, seed: u64) -> CliResult<Image> {
    let mut k = 0u64;
    Ok(img.map_channels(|c| {
        k += 1;
        add_awgn(c, NoiseSpec { sigma, seed: seed.wrapping_add(k - 1) })
    })?)
}

fn run_restore(
    observed: &Image,
    degradation: &Degradation,
    cfg: &RestoreConfig,
    output: &Path,
    reference: Option<&Path>,
    out: &mut dyn std::io::Write,
) -> CliResult<()> {
    let reference = reference.map(read_image).transpose()?;
    let (restored, mut report) = restore(observed, degradation, cfg)?;
    write_image(output, &restored)?;
    if let Some(r) = reference {
        report.score(&restored, &r)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.6},{:.3}",
            report.task.name(),
            cfg.admm.family.aux_count(),
            cfg.admm.outer_layers,
            cfg.admm.cg_iters,
            report.psnr.unwrap_or(f64::NAN),
            report.ssim.unwrap_or(f64::NAN),
            report.seconds
        );
        let max_err = restored
            .channels()
            .iter()
            .zip(r.channels())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        eprintln!("max_abs_error = {max_err:.3e}");
    }
    Ok(())
}

fn cmd_denoise(a: &DenoiseArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    check_sigma("sigma", a.sigma)?;
    let cfg = a.solver.resolve()?;
    let img = read_image(&a.input)?;
    let observed = if a.sigma > 0.0 { noisy(&img, a.sigma, a.seed)? } else { img };
    run_restore(&observed, &Degradation::Identity, &cfg, &a.output, a.reference.as_deref(), out)
}

fn cmd_interpolate(a: &InterpolateArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let cfg = a.solver.resolve()?;
    if let Some(k) = a.keep {
        if !(k > 0.0 && k <= 1.0) {
            return Err(CliError::usage("--keep must be in (0, 1]"));
        }
    }
    let img = read_image(&a.input)?;
    let n = img.width() * img.height();
    let keep = match (a.keep, &a.mask) {
        (Some(k), _) => make_mask(n, k, a.seed)?,
        (None, Some(path)) => {
            let (w, h, keep) = pnm::read_mask(path).map_err(io_context(path))?;
            if (w, h) != (img.width(), img.height()) {
                return Err(CliError::usage("mask and input dimensions differ"));
            }
            keep
        }
        (None, None) => return Err(CliError::usage("interpolate needs --keep or --mask")),
    };
    if !keep.iter().any(|&k| k) {
        return Err(CliError::usage("mask keeps no pixels"));
    }
    let d = Degradation::Mask(keep);
    let observed = d.apply(&img)?;
    run_restore(&observed, &d, &cfg, &a.output, a.reference.as_deref(), out)
}

fn load_kernel(path: Option<&Path>, size: usize, std: f64) -> CliResult<Kernel> {
    match path {
        Some(p) => Kernel::load(p).map_err(io_context(p)),
        None => make_gaussian_kernel(size, std).map_err(|e| CliError::usage(e.to_string())),
    }
}

fn cmd_deblur(a: &DeblurArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    check_sigma("sigma", a.sigma)?;
    let cfg = a.solver.resolve()?;
    let kernel = load_kernel(a.kernel.as_deref(), a.kernel_size, a.kernel_std)?;
    let img = read_image(&a.input)?;
    let d = Degradation::Blur(kernel);
    let observed = if a.synthesize {
        let blurred = d.apply(&img)?;
        if a.sigma > 0.0 {
            noisy(&blurred, a.sigma, a.seed)?
        } else {
            blurred
        }
    } else {
        img
    };
    run_restore(&observed, &d, &cfg, &a.output, a.reference.as_deref(), out)
}

fn cmd_degrade(a: &DegradeArgs) -> CliResult<()> {
    check_sigma("awgn", a.awgn)?;
    if let Some(k) = a.mask {
        if !(k > 0.0 && k <= 1.0) {
            return Err(CliError::usage("--mask must be in (0, 1]"));
        }
    }
    let kernel = a.blur.as_deref().map(|p| load_kernel(Some(p), 0, 0.0)).transpose()?;
    let mut img = read_image(&a.input)?;
    if let Some(k) = kernel {
        img = Degradation::Blur(k).apply(&img)?;
    }
    if a.awgn > 0.0 {
        img = noisy(&img, a.awgn, a.seed)?;
    }
    if let Some(frac) = a.mask {
        let keep = make_mask(img.width() * img.height(), frac, a.seed)?;
        img = Degradation::Mask(keep.clone()).apply(&img)?;
        let mask_path = a.mask_out.clone().unwrap_or_else(|| a.output.with_extension("mask.pgm"));
        pnm::write_mask(&mask_path, img.width(), img.height(), &keep).map_err(io_context(&mask_path))?;
    }
    write_image(&a.output, &img)
}

/// Line gradient-graph Laplacian of an `n`-pixel line used by `spectrum`,
/// plus `1' Lt' Lt 1` of its normalized core when `normalized`.
pub fn line_gng(n: usize, weights: &[f64], normalized: bool) -> gglr::Result<(SparseSym, Option<f64>)> {
    let lbar = laplacian(&Graph::path(weights)?);
    if normalized {
        let l_rw = random_walk_laplacian(&lbar)?;
        let q = row_sums(&l_rw).iter().map(|v| v * v).sum();
        let core = SparseSym::gram(&l_rw);
        Ok((core.congruence(&grad_op(n)?)?, Some(q)))
    } else {
        Ok((gng_laplacian(&lbar, &grad_op(n)?)?, None))
    }
}

fn cmd_spectrum(a: &SpectrumArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    use rand::{Rng, SeedableRng};
    if !(3..=64).contains(&a.n) {
        return Err(CliError::usage(format!("--n must be in 3..=64, got {}", a.n)));
    }
    if let Some(w) = a.weight {
        if !(w > 0.0 && w.is_finite()) {
            return Err(CliError::usage("--weight must be positive"));
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let weights: Vec<f64> = (0..a.n - 2).map(|_| a.weight.unwrap_or_else(|| rng.random_range(0.05..1.0))).collect();
    let (l, ones_quad) = line_gng(a.n, &weights, a.normalized)?;
    let mut ev: Vec<f64> = l.to_dense().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let k = a.k.unwrap_or(a.n).min(a.n);
    for (i, v) in ev.iter().take(k).enumerate() {
        let _ = writeln!(out, "lambda_{} = {:.12e}", i + 1, v);
    }
    let _ = writeln!(out, "null_dim = {}", ev.iter().filter(|v| v.abs() < NULL_TOL).count());
    if let Some(q) = ones_quad {
        let _ = writeln!(out, "ones_quad = {q:e}");
    }
    Ok(())
}

/// Reads `NAME_clean.pgm` / `NAME_degraded.pgm` (and optional
/// `NAME_mask.pgm`) pairs from `dir`, sorted by name.
pub fn load_pairs(dir: &Path) -> CliResult<Vec<TrainPair>> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", dir.display()) })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter_map(|f| f.strip_suffix("_clean.pgm").or_else(|| f.strip_suffix("_clean.ppm")).map(str::to_owned))
        .collect();
    names.sort();
    let mut pairs = Vec::new();
    for name in names {
        let find = |suffix: &str| {
            ["pgm", "ppm"].iter().map(|ext| dir.join(format!("{name}_{suffix}.{ext}"))).find(|p| p.exists())
        };
        let (Some(clean), Some(degraded)) = (find("clean"), find("degraded")) else {
            continue;
        };
        let clean = read_image(&clean)?;
        let degraded = read_image(&degraded)?;
        let degradation = match find("mask") {
            Some(p) => Degradation::Mask(pnm::read_mask(&p).map_err(io_context(&p))?.2),
            None => Degradation::Identity,
        };
        pairs.push(TrainPair { clean, degraded, degradation });
    }
    Ok(pairs)
}

fn cmd_tune(a: &TuneArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    if !(a.grid_factor > 1.0 && a.grid_factor.is_finite()) {
        return Err(CliError::usage("--grid-factor must exceed 1"));
    }
    let base = a.solver.resolve()?;
    let pairs = load_pairs(&a.dir)?;
    if pairs.is_empty() {
        return Err(CliError {
            code: EXIT_IO,
            message: format!("{}: no NAME_clean / NAME_degraded pairs found", a.dir.display()),
        });
    }
    let mut space = SearchSpace::around(&base, a.grid_factor, a.grid_steps);
    if base.prior.kind == PriorKind::Glr {
        space = space.with(Param::MuTilde, vec![]).with(Param::SigmaA, vec![]).with(Param::RhoTilde, vec![]);
    } else {
        space = space.with(Param::SigmaX, vec![]);
    }
    let start = mean_psnr(&pairs, &base)?;
    let result = tune_params(&pairs, &base, &space)?;
    let text = format!(
        "# tuned on {} pair(s): mean PSNR {:.4} dB (start {:.4} dB)\n{}",
        pairs.len(),
        result.psnr,
        start,
        config_text(&result.config)
    );
    fs::write(&a.out, text).map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", a.out.display()) })?;
    let _ = writeln!(out, "start_psnr_db = {start:.4}");
    let _ = writeln!(out, "tuned_psnr_db = {:.4}", result.psnr);
    let _ = writeln!(out, "evaluations = {}", result.evaluations);
    Ok(())
}

fn cmd_selftest(out: &mut dyn std::io::Write) -> CliResult<()> {
    let results = selftest::run_all();
    let mut failed = 0;
    for r in &results {
        let _ = writeln!(out, "{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(CliError { code: EXIT_SOLVER, message: format!("{failed} suite(s) failed") });
    }
    Ok(())
}

/// Dispatches a parsed command, writing reports to `out`.
pub fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> CliResult<()> {
    match &cli.command {
        Command::Denoise(a) => cmd_denoise(a, out),
        Command::Interpolate(a) => cmd_interpolate(a, out),
        Command::Deblur(a) => cmd_deblur(a, out),
        Command::Degrade(a) => cmd_degrade(a),
        Command::Spectrum(a) => cmd_spectrum(a, out),
        Command::Tune(a) => cmd_tune(a, out),
        Command::Selftest => cmd_selftest(out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => {
            let _ = lock.flush();
            EXIT_OK
        }
        Err(e) => {
            let _ = lock.flush();
            eprintln!("gglr: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let map = parse_config("# comment\nmu = 0.3  # trailing\n\nsigma-a=0.2\n").unwrap();
        assert_eq!(map["mu"], "0.3");
        assert_eq!(map["sigma_a"], "0.2");
        assert!(parse_config("mu 0.3").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        fs::write(&path, "mu = 0.3\nrho = 2\naux = 4\n").unwrap();
        let args = SolverArgs { mu: Some(0.9), config: Some(path), ..Default::default() };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.prior.mu, 0.9);
        assert_eq!(cfg.admm.rho, 2.0);
        assert_eq!(cfg.admm.family, SolverFamily::Aux4);
    }

    #[test]
    fn config_round_trip() {
        let mut cfg = RestoreConfig::default();
        cfg.prior.mu = 0.125;
        cfg.admm.family = SolverFamily::Aux2;
        cfg.prior.kind = PriorKind::Glr;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        fs::write(&path, config_text(&cfg)).unwrap();
        let args = SolverArgs { config: Some(path), ..Default::default() };
        assert_eq!(args.resolve().unwrap(), cfg);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for args in [
            SolverArgs { aux: Some(3), ..Default::default() },
            SolverArgs { mu: Some(-1.0), ..Default::default() },
            SolverArgs { stride: Some(40), ..Default::default() },
            SolverArgs { layers: Some(0), ..Default::default() },
        ] {
            assert_eq!(args.resolve().unwrap_err().code, EXIT_USAGE);
        }
    }

    #[test]
    fn unknown_config_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        fs::write(&path, "bogus = 1\n").unwrap();
        let args = SolverArgs { config: Some(path), ..Default::default() };
        assert_eq!(args.resolve().unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn line_gng_spectrum() {
        let (l, _) = line_gng(3, &[1.0], false).unwrap();
        let mut ev: Vec<f64> = l.to_dense().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12);
        assert!((ev[2] - 6.0).abs() < 1e-12);
        let (_, q) = line_gng(6, &[0.3, 0.8, 0.1, 0.5], true).unwrap();
        assert_eq!(q, Some(0.0));
    }
}
