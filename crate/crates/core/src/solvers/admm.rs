//! Direct solve and the ADMM family for
//!
//! ```text
//! min_x ||y - A x||^2 + mu x^T L x + mu_tilde x^T Lt x
//! ```
//!
//! Every ADMM variant introduces auxiliaries `z_i` with constraints `x = z_i`
//! and scaled multipliers `u_i` (initialised to zero). Auxiliary `i` owns a
//! subset of the prior terms and a penalty `rho_i`; one layer is
//!
//! ```text
//! (2 A^T A + sum_i rho_i I) x = 2 A^T y + sum_i rho_i (z_i - u_i)
//! (I + (2 / rho_i) sum_(t in i) mu_t L_t) z_i = x + u_i
//! u_i += x - z_i
//! ```
//!
//! with each linear system handled by a fixed number of warm-started CG
//! iterations. With one auxiliary this is the plain plug-and-play split;
//! two auxiliaries separate the inline and cross aggregates; four separate
//! the row, column, column-pair and row-pair partial sums.

use crate::error::{check_dim, Error, Result};
use crate::formation::FormationModel;
use crate::linalg::{norm_inf, FnOperator};
use crate::prior::GngPrior;
use crate::solvers::cg::cg_solve;
use crate::sparse::SparseSym;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverFamily {
    /// Solve the normal equations with CG to tolerance.
    Direct,
    Aux1,
    Aux2,
    Aux4,
}

impl SolverFamily {
    /// Maps the auxiliary-variable count (0 for direct) to a family.
    pub fn from_aux_count(n: u8) -> Result<Self> {
        match n {
            0 => Ok(Self::Direct),
            1 => Ok(Self::Aux1),
            2 => Ok(Self::Aux2),
            4 => Ok(Self::Aux4),
            other => Err(Error::invalid(format!("auxiliary count must be 0, 1, 2 or 4, got {other}"))),
        }
    }

    pub fn aux_count(self) -> u8 {
        match self {
            Self::Direct => 0,
            Self::Aux1 => 1,
            Self::Aux2 => 2,
            Self::Aux4 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmConfig {
    pub family: SolverFamily,
    pub rho: f64,
    pub rho_tilde: f64,
    /// Outer layers `K`.
    pub outer_layers: usize,
    /// CG iterations `L` per linear system.
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub relearn_graphs: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            family: SolverFamily::Aux1,
            rho: 1.0,
            rho_tilde: 1.0,
            outer_layers: 10,
            cg_iters: 10,
            cg_tol: 1e-8,
            relearn_graphs: true,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) || !(self.rho_tilde > 0.0 && self.rho_tilde.is_finite()) {
            return Err(Error::invalid("penalties rho and rho_tilde must be positive"));
        }
        if self.outer_layers == 0 || self.cg_iters == 0 {
            return Err(Error::invalid("outer layers and CG iterations must be at least 1"));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::invalid("CG tolerance must be positive"));
        }
        Ok(())
    }
}

/// Rebuilds the prior from current estimates (one plane per channel).
pub trait PriorSource {
    fn build(&self, estimates: &[Vec<f64>]) -> Result<GngPrior>;
}

impl<F: Fn(&[Vec<f64>]) -> Result<GngPrior>> PriorSource for F {
    fn build(&self, estimates: &[Vec<f64>]) -> Result<GngPrior> {
        self(estimates)
    }
}

/// Convergence diagnostics of one outer layer, maximised over channels.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LayerResidual {
    /// `max_i ||x - z_i||_inf`
    pub primal: f64,
    /// `max_i ||z_i - z_i_prev||_inf`
    pub dual: f64,
}

/// Iterates of one channel.
#[derive(Clone, Debug)]
pub struct AdmmState {
    pub x: Vec<f64>,
    pub aux: Vec<Vec<f64>>,
    /// Scaled multipliers `u_i = lambda_i / rho_i`.
    pub multipliers: Vec<Vec<f64>>,
    pub layers: usize,
}

impl AdmmState {
    fn new(init: &[f64], aux: usize) -> Self {
        Self {
            x: init.to_vec(),
            aux: vec![init.to_vec(); aux],
            multipliers: vec![vec![0.0; init.len()]; aux],
            layers: 0,
        }
    }

    /// Mean of the auxiliaries: the prior-side estimate used to relearn graphs.
    pub fn prior_estimate(&self) -> Vec<f64> {
        if self.aux.is_empty() {
            return self.x.clone();
        }
        let k = self.aux.len() as f64;
        (0..self.x.len()).map(|j| self.aux.iter().map(|z| z[j]).sum::<f64>() / k).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub x: Vec<Vec<f64>>,
    pub states: Vec<AdmmState>,
    pub history: Vec<LayerResidual>,
}

struct Split {
    penalty: f64,
    op: SparseSym,
}

fn splits(prior: &GngPrior, cfg: &AdmmConfig) -> Result<Vec<Split>> {
    let dim = prior.dim();
    let make = |penalty: f64, terms: &[(f64, &SparseSym)]| -> Result<Split> {
        let scaled: Vec<(f64, &SparseSym)> = terms.iter().map(|&(mu, l)| (2.0 * mu / penalty, l)).collect();
        Ok(Split { penalty, op: SparseSym::combine(dim, 1.0, &scaled)? })
    };
    let (rho, rho_t) = (cfg.rho, cfg.rho_tilde);
    let (mu, mu_t) = (prior.mu, prior.mu_tilde);
    match cfg.family {
        SolverFamily::Direct => Ok(Vec::new()),
        SolverFamily::Aux1 => Ok(vec![make(rho, &[(mu, &prior.inline), (mu_t, &prior.cross)])?]),
        SolverFamily::Aux2 => Ok(vec![make(rho, &[(mu, &prior.inline)])?, make(rho_t, &[(mu_t, &prior.cross)])?]),
        SolverFamily::Aux4 => {
            let c = prior
                .components
                .as_ref()
                .ok_or_else(|| Error::invalid("four-way split needs a prior built with component terms"))?;
            Ok(vec![
                make(rho, &[(mu, &c.rows)])?,
                make(rho, &[(mu, &c.cols)])?,
                make(rho_t, &[(mu_t, &c.col_pairs)])?,
                make(rho_t, &[(mu_t, &c.row_pairs)])?,
            ])
        }
    }
}

/// Right-hand side contribution `sum_i rho_i (z_i - u_i)` of the x-update.
///
/// With equal penalties this is `rho * (z_1 - u_1 + z_2 - u_2 + ...)`.
pub fn x_update_target(aux: &[Vec<f64>], multipliers: &[Vec<f64>], penalties: &[f64]) -> Vec<f64> {
    let n = aux.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for ((z, u), &rho) in aux.iter().zip(multipliers).zip(penalties) {
        for j in 0..n {
            out[j] += rho * (z[j] - u[j]);
        }
    }
    out
}

/// Solves `(A^T A + mu L + mu_tilde Lt) x = A^T y` by CG to relative
/// residual `tol`, capped at `5 * dim` iterations.
pub fn direct_solve(prior: &GngPrior, m: &FormationModel, y: &[f64], tol: f64) -> Result<Vec<f64>> {
    direct_solve_from(prior, m, y, None, tol)
}

pub fn direct_solve_from(
    prior: &GngPrior,
    m: &FormationModel,
    y: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
) -> Result<Vec<f64>> {
    let dim = prior.dim();
    check_dim(dim, m.input_dim())?;
    let reg = prior.combined()?;
    let rhs = m.adjoint(y)?;
    let op = FnOperator::new(dim, |v: &[f64], out: &mut [f64]| {
        m.gram_into(v, out);
        let mut tmp = vec![0.0; v.len()];
        reg.csr().mul_vec_into(v, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    });
    let cap = 5 * dim;
    let out = cg_solve(&op, &rhs, x0, cap, tol)?;
    if !out.converged {
        return Err(Error::NotConverged { iterations: out.iterations, residual: out.rel_residual });
    }
    Ok(out.x)
}

/// Runs the configured solver family on every channel, sharing one prior
/// across channels. `init` gives the starting estimate per channel (`x`,
/// and every `z_i`). When `cfg.relearn_graphs` is set and a `source` is
/// given, the prior is rebuilt from the auxiliaries after every layer but
/// the last.
pub fn solve_channels(
    ys: &[Vec<f64>],
    m: &FormationModel,
    init: &[Vec<f64>],
    prior: GngPrior,
    cfg: &AdmmConfig,
    source: Option<&dyn PriorSource>,
) -> Result<SolveOutput> {
    cfg.validate()?;
    check_dim(ys.len(), init.len())?;
    let dim = prior.dim();
    check_dim(dim, m.input_dim())?;
    for (y, x0) in ys.iter().zip(init) {
        check_dim(m.output_dim(), y.len())?;
        check_dim(dim, x0.len())?;
    }
    let relearn = cfg.relearn_graphs && source.is_some();

    if cfg.family == SolverFamily::Direct {
        let layers = if relearn { cfg.outer_layers } else { 1 };
        let mut prior = prior;
        let mut states: Vec<AdmmState> = init.iter().map(|x0| AdmmState::new(x0, 0)).collect();
        let mut history = Vec::with_capacity(layers);
        for k in 0..layers {
            let mut change: f64 = 0.0;
            for (st, y) in states.iter_mut().zip(ys) {
                let x = direct_solve_from(&prior, m, y, Some(&st.x), cfg.cg_tol)?;
                change = change.max(norm_inf(&crate::linalg::sub(&x, &st.x)));
                st.x = x;
                st.layers += 1;
            }
            history.push(LayerResidual { primal: 0.0, dual: change });
            if let (true, Some(src)) = (relearn && k + 1 < layers, source) {
                let est: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
                prior = src.build(&est)?;
            }
        }
        return Ok(SolveOutput { x: states.iter().map(|s| s.x.clone()).collect(), states, history });
    }

    let mut parts = splits(&prior, cfg)?;
    let penalties: Vec<f64> = parts.iter().map(|s| s.penalty).collect();
    let total_penalty: f64 = penalties.iter().sum();
    let x_op = FnOperator::new(dim, |v: &[f64], out: &mut [f64]| {
        m.gram_into(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = 2.0 * *o + total_penalty * vi;
        }
    });
    let aty: Vec<Vec<f64>> = ys.iter().map(|y| m.adjoint(y)).collect::<Result<_>>()?;
    let mut states: Vec<AdmmState> = init.iter().map(|x0| AdmmState::new(x0, parts.len())).collect();
    let mut history = Vec::with_capacity(cfg.outer_layers);

    for k in 0..cfg.outer_layers {
        let mut res = LayerResidual::default();
        for (st, aty) in states.iter_mut().zip(&aty) {
            let mut rhs = x_update_target(&st.aux, &st.multipliers, &penalties);
            for (r, a) in rhs.iter_mut().zip(aty) {
                *r += 2.0 * a;
            }
            st.x = cg_solve(&x_op, &rhs, Some(&st.x), cfg.cg_iters, cfg.cg_tol)?.x;

            for (i, part) in parts.iter().enumerate() {
                let target: Vec<f64> = st.x.iter().zip(&st.multipliers[i]).map(|(x, u)| x + u).collect();
                let z = cg_solve(&part.op, &target, Some(&st.aux[i]), cfg.cg_iters, cfg.cg_tol)?.x;
                res.dual = res.dual.max(norm_inf(&crate::linalg::sub(&z, &st.aux[i])));
                st.aux[i] = z;
            }
            for i in 0..parts.len() {
                let mut gap: f64 = 0.0;
                for j in 0..dim {
                    let d = st.x[j] - st.aux[i][j];
                    st.multipliers[i][j] += d;
                    gap = gap.max(d.abs());
                }
                res.primal = res.primal.max(gap);
            }
            st.layers += 1;
        }
        history.push(res);

        if let (true, Some(src)) = (relearn && k + 1 < cfg.outer_layers, source) {
            let est: Vec<Vec<f64>> = states.iter().map(AdmmState::prior_estimate).collect();
            let next = src.build(&est)?;
            parts = splits(&next, cfg)?;
        }
    }

    Ok(SolveOutput { x: states.iter().map(|s| s.x.clone()).collect(), states, history })
}

fn single(
    family: SolverFamily,
    y: &[f64],
    m: &FormationModel,
    prior: &GngPrior,
    cfg: &AdmmConfig,
    source: Option<&dyn PriorSource>,
) -> Result<Vec<f64>> {
    let cfg = AdmmConfig { family, ..*cfg };
    let init = m.adjoint(y)?;
    let out = solve_channels(&[y.to_vec()], m, &[init], prior.clone(), &cfg, source)?;
    Ok(out.x.into_iter().next().expect("one channel"))
}

/// One auxiliary `z` carrying the whole prior. Starts from `z = A^T y`.
pub fn admm_aux1(
    y: &[f64],
    m: &FormationModel,
    prior: &GngPrior,
    cfg: &AdmmConfig,
    source: Option<&dyn PriorSource>,
) -> Result<Vec<f64>> {
    single(SolverFamily::Aux1, y, m, prior, cfg, source)
}

/// Two auxiliaries: `z` for the inline aggregate (penalty `rho`), `z~` for
/// the cross aggregate (penalty `rho_tilde`).
pub fn admm_aux2(
    y: &[f64],
    m: &FormationModel,
    prior: &GngPrior,
    cfg: &AdmmConfig,
    source: Option<&dyn PriorSource>,
) -> Result<Vec<f64>> {
    single(SolverFamily::Aux2, y, m, prior, cfg, source)
}

/// Four auxiliaries, one per partial sum (rows, columns with `rho`; column
/// pairs, row pairs with `rho_tilde`). The prior must keep its components.
pub fn admm_aux4(
    y: &[f64],
    m: &FormationModel,
    prior: &GngPrior,
    cfg: &AdmmConfig,
    source: Option<&dyn PriorSource>,
) -> Result<Vec<f64>> {
    single(SolverFamily::Aux4, y, m, prior, cfg, source)
}

/// The z-subproblem operators `I + (2 / rho_i) sum mu_t L_t` of a family.
pub fn z_operators(prior: &GngPrior, cfg: &AdmmConfig) -> Result<Vec<SparseSym>> {
    Ok(splits(prior, cfg)?.into_iter().map(|s| s.op).collect())
}
