pub mod admm;
pub mod cg;
pub mod filter;
pub mod tune;

pub use admm::{
    admm_aux1, admm_aux2, admm_aux4, direct_solve, solve_channels, AdmmConfig, LayerResidual, PriorSource, SolveOutput,
    SolverFamily,
};
pub use cg::{cg_solve, CgOutcome};
pub use filter::glr_iterative_filter;
pub use tune::{log_grid, tune_params, Param, SearchSpace, TrainPair, TuneResult};
