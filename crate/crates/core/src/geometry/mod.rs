//! One-dimensional quadrature for the geometry of the Stein flow: the operator
//! `T_{k,ρ}`, Hessians of the KL divergence, the Stein generator spectrum,
//! Rayleigh coefficients and geodesics.

mod equilibrium;
mod geodesic;
mod grid;
mod operators;
mod spectrum;

pub use equilibrium::{q_equilibrium_residual, q_residual};
pub use geodesic::{geodesic_shoot, geodesic_speed, unit_speed, GeodesicTrajectory};
pub use grid::{DensityField1D, Grid1D, ScalarField1D};
pub use operators::{
    be_1d, hessian_form, kl_quadrature, matern_rkhs_norm, rayleigh, stein_bilinear, stein_fisher_quadrature, t_k_rho,
    HessianForm, KlDecomposition,
};
pub use spectrum::{stein_form, stein_generator_gap, SteinForm, SteinSpectrum, MAX_BASIS};
