//! Particle dynamics: the deterministic SVGD ODE, stochastic SVGD and an
//! overdamped Langevin baseline.

mod ensemble;
mod integrators;
mod stochastic;

pub use ensemble::{svgd_velocity, svgd_velocity_field, ParticleEnsemble};
pub use integrators::{evolve_deterministic, integrate, IntegrationStats, IntegratorConfig, Method, StepRecord};
pub use stochastic::{
    evolve_langevin, evolve_stochastic, langevin_step, langevin_step_with_noise, stochastic_drift, stochastic_step,
    stochastic_step_with_noise, StochasticRun, TestFn,
};
