//! Stein variational gradient descent: particle dynamics, the mean-field PDE
//! and equilibrium-geometry diagnostics.
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`). The aliases at the crate root fix the
//! scalar to `f64`, which is what the experiment layer and the CLI use.

// `!(x > 0)` is how validation rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod meanfield;
pub mod metrics;
pub mod scalar;
pub mod targets;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Kernel = kernels::KernelSpec<f64>;
pub type Target = targets::TargetModel<f64>;
pub type Ensemble = dynamics::ParticleEnsemble<f64>;
pub type Integrator = dynamics::IntegratorConfig<f64>;
pub type Grid = geometry::Grid1D<f64>;
pub type Density = geometry::DensityField1D<f64>;
pub type Field = geometry::ScalarField1D<f64>;
