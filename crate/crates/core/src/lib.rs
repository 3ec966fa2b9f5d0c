//! Graph-based image restoration with gradient graph Laplacian priors.
//!
//! The crate builds signal-dependent graphs over image patches, assembles
//! quadratic priors that vanish on piecewise-planar signals, and solves the
//! regularized inverse problem `min ||y - A x||^2 + mu x'Lx + mu~ x'L~x` for
//! denoising (`A = I`), interpolation (sampling mask) and non-blind
//! deblurring (convolution) with a conjugate-gradient inner solver and an
//! ADMM family of splits.
//!
//! ```
//! use gglr::pipeline::{restore, Degradation, RestoreConfig};
//! use gglr::synth::piecewise_planar;
//! use gglr::metrics::psnr;
//!
//! let clean = piecewise_planar(36, 36, 3, 1);
//! let (out, report) = restore(&clean, &Degradation::Identity, &RestoreConfig::default())?;
//! assert_eq!(report.patch_count, 1);
//! assert!(psnr(&out, &clean)? > 30.0);
//! # Ok::<(), gglr::Error>(())
//! ```

pub mod error;
pub mod features;
pub mod formation;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod pnm;
pub mod prior;
pub mod selftest;
pub mod solvers;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
pub use features::{FeatureConfig, FeatureField};
pub use formation::{FormationModel, Kernel, NoiseSpec};
pub use graph::{Graph, KernelParams};
pub use pipeline::{Degradation, Image, PriorConfig, PriorKind, RestoreConfig, RestoreReport, Task};
pub use prior::{GngPrior, Normalization, Patch};
pub use solvers::{AdmmConfig, SolverFamily};
pub use sparse::{CsrMatrix, SparseSym};

#[doc = include_str!("../../../book/src/introduction.md")]
mod guide_introduction {}
#[doc = include_str!("../../../book/src/graphs.md")]
mod guide_graphs {}
#[doc = include_str!("../../../book/src/gradient-prior.md")]
mod guide_gradient_prior {}
#[doc = include_str!("../../../book/src/formation.md")]
mod guide_formation {}
#[doc = include_str!("../../../book/src/solvers.md")]
mod guide_solvers {}
#[doc = include_str!("../../../book/src/pipeline.md")]
mod guide_pipeline {}
#[doc = include_str!("../../../book/src/cli.md")]
mod guide_cli {}
#[doc = include_str!("../../../book/src/acceptance.md")]
mod guide_acceptance {}
