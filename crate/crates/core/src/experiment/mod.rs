//! JSON-configured runs and parameter sweeps on `f64`, with CSV/JSON artifacts.

pub mod analysis;
pub mod config;
pub mod io;
pub mod run;
pub mod sweep;

pub use analysis::{
    parse_kernel, parse_target, read_grid_field, write_geodesic, FieldSpec, GeodesicConfig, PdeConfig, PdeOutput,
};
pub use config::{
    Bandwidth, DynamicsConfig, ExperimentConfig, InitConfig, IntegratorSettings, KernelConfig, KernelTerm, MethodName,
    Schedule, TargetConfig, TargetSpec, W1Method,
};
pub use io::{Manifest, ManifestEntry};
pub use run::{run_experiment, simulate, write_artifacts, RunOutput};
pub use sweep::{apply_axis, sweep, SweepAxis, SweepCell, SweepResult};
