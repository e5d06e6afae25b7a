use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{evolve_deterministic, evolve_langevin, evolve_stochastic, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::experiment::config::{DynamicsConfig, ExperimentConfig, KernelConfig, W1Method};
use crate::experiment::io;
use crate::kernels::KernelSpec;
use crate::metrics::{
    histogram, stein_fisher, w1_1d, w1_assignment, w1_sinkhorn, Histogram, MetricsRow, MAX_ASSIGNMENT_SIZE,
};
use crate::targets::TargetModel;

/// ChaCha stream reserved for the W1 reference sample, so that it never
/// overlaps the particle stream of the same seed.
const REFERENCE_STREAM: u64 = 1;
/// Reference points used by the Sinkhorn W1 estimate.
const SINKHORN_POINTS: usize = 512;
const SINKHORN_ITERS: usize = 5_000;

/// Everything a run produces before it is written to disk.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub positions: Vec<f64>,
    pub dim: usize,
    /// Kernel with every median bandwidth replaced by its value.
    pub kernel: KernelConfig,
    pub histogram: Option<Histogram<f64>>,
}

struct Evaluator<'a> {
    cfg: &'a ExperimentConfig,
    target: &'a TargetModel<f64>,
    kernel: &'a KernelSpec<f64>,
    reference: Vec<f64>,
}

impl Evaluator<'_> {
    fn w1(&self, e: &ParticleEnsemble<f64>) -> Result<Option<f64>> {
        let dim = e.dim();
        let n = e.len();
        let method = match (self.cfg.w1_method, dim) {
            (W1Method::None, _) => return Ok(None),
            (W1Method::Auto, 1) => W1Method::Exact1d,
            (W1Method::Auto, _) if n <= MAX_ASSIGNMENT_SIZE && n <= self.cfg.reference_size => W1Method::Assign,
            (W1Method::Auto, _) => W1Method::Sinkhorn,
            (m, _) => m,
        };
        let value = match method {
            W1Method::Exact1d => {
                if dim != 1 {
                    return Err(Error::Config("exact1d W1 needs a one-dimensional target".into()));
                }
                w1_1d(e.positions(), &self.reference)?
            }
            W1Method::Assign => {
                if n * dim > self.reference.len() {
                    return Err(Error::Config("reference sample is smaller than the ensemble".into()));
                }
                w1_assignment(e.positions(), &self.reference[..n * dim], dim)?
            }
            W1Method::Sinkhorn => {
                let m = SINKHORN_POINTS.min(self.reference.len() / dim);
                w1_sinkhorn(
                    e.positions(),
                    &self.reference[..m * dim],
                    dim,
                    self.cfg.sinkhorn_epsilon,
                    SINKHORN_ITERS,
                )?
                .cost
            }
            W1Method::Auto | W1Method::None => unreachable!("resolved above"),
        };
        Ok(Some(value))
    }

    fn row(&self, e: &ParticleEnsemble<f64>) -> Result<MetricsRow> {
        let sf = if e.len() >= 2 {
            Some(stein_fisher(e, self.kernel, self.target)?.value)
        } else {
            None
        };
        Ok(MetricsRow {
            time: e.time,
            grad_evals: e.grad_evals(),
            pair_evals: e.pair_evals(),
            w1: self.w1(e)?,
            stein_fisher: sf,
            extras: Vec::new(),
        })
    }
}

/// Runs the configured dynamics and collects metrics at `t = 0` and at every
/// scheduled time.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let ctx = format!("run seed={}", cfg.seed);
    let target = cfg.target.build().map_err(|e| e.context(&ctx))?;
    let dim = target.dim();
    let init = cfg.init_law(dim)?;
    let mut e = ParticleEnsemble::from_law(&init, cfg.n, cfg.seed)?;
    let resolved = cfg.kernel.resolve(e.positions(), dim).map_err(|e| e.context(&ctx))?;
    let kernel = resolved.build(&target).map_err(|e| e.context(&ctx))?;

    let reference = if cfg.w1_method == W1Method::None {
        Vec::new()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(REFERENCE_STREAM);
        target.sample_flat(cfg.reference_size, &mut rng)
    };
    let eval = Evaluator {
        cfg,
        target: &target,
        kernel: &kernel,
        reference,
    };

    let mut rows = vec![eval.row(&e).map_err(|err| err.context(&ctx))?];
    let times = cfg.record_times();
    let observe = |s: &ParticleEnsemble<f64>| -> Result<()> {
        rows.push(eval.row(s)?);
        Ok(())
    };
    let result = match cfg.dynamics {
        DynamicsConfig::Deterministic => {
            let icfg = cfg.integrator.build()?;
            evolve_deterministic(&mut e, &kernel, &target, cfg.t_end, &icfg, &times, observe).map(|_| ())
        }
        DynamicsConfig::Stochastic { dt } => {
            evolve_stochastic(&mut e, &kernel, &target, cfg.t_end, dt, &[], &times, observe).map(|_| ())
        }
        DynamicsConfig::Langevin { dt } => {
            evolve_langevin(&mut e, &target, cfg.t_end, dt, &[], &times, observe).map(|_| ())
        }
    };
    result.map_err(|err| err.context(&ctx))?;

    let histogram = if dim == 1 {
        Some(histogram(
            e.positions(),
            cfg.histogram_bins,
            target.truncation_domain(),
        )?)
    } else {
        None
    };
    Ok(RunOutput {
        rows,
        positions: e.positions().to_vec(),
        dim,
        kernel: resolved,
        histogram,
    })
}

/// Writes `metrics.csv`, `positions.csv`, `histogram.csv` (1D), the config
/// echo `config.json` and `manifest.json` into `dir`.
pub fn write_artifacts(cfg: &ExperimentConfig, out: &RunOutput, dir: &Path) -> Result<io::Manifest> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<PathBuf> = vec!["metrics.csv".into(), "positions.csv".into()];
    io::write_metrics_csv(&dir.join("metrics.csv"), &out.rows)?;
    io::write_positions_csv(&dir.join("positions.csv"), &out.positions, out.dim)?;
    if let Some(h) = &out.histogram {
        io::write_histogram_csv(&dir.join("histogram.csv"), h)?;
        files.push("histogram.csv".into());
    }
    let mut echo = cfg.clone();
    echo.kernel = out.kernel.clone();
    // The echo must not depend on where the run was written.
    echo.output_dir = None;
    io::write_json(&dir.join("config.json"), &echo)?;
    files.push("config.json".into());
    io::write_manifest(dir, cfg.seed, &files)
}

/// [`simulate`], then [`write_artifacts`] if the config names an output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let out = simulate(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        write_artifacts(cfg, &out, dir)?;
    }
    Ok(out)
}
