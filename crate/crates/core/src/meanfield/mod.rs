//! Finite-volume solver for the one-dimensional Stein mean-field equation and
//! the comparison of particle systems against it.

mod limit;
mod pde;

pub use limit::{density_quantiles, particles_vs_pde, LimitOptions, LimitPoint};
pub use pde::{
    evolve_pde, evolve_pde_with, stein_pde_rhs, stein_pde_rhs_with, BracketForm, PdeOperator, PdeRun, CLIP_TOLERANCE,
};
