//! Evaluation metrics: Wasserstein-1 distances, the kernel Stein estimate of the
//! Stein-Fisher information, and histograms.

mod histogram;
mod stein_fisher;
mod wasserstein;

pub use histogram::{histogram, Histogram};
pub use stein_fisher::{stein_fisher, stein_fisher_points, Statistic, SteinFisherEstimate};
pub use wasserstein::{w1_1d, w1_assignment, w1_sinkhorn, SinkhornResult, MAX_ASSIGNMENT_SIZE};

/// One time-stamped record of run diagnostics.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetricsRow {
    pub time: f64,
    pub grad_evals: u64,
    pub pair_evals: u64,
    pub w1: Option<f64>,
    pub stein_fisher: Option<f64>,
    pub extras: Vec<(String, f64)>,
}
