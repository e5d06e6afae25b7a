use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{Bandwidth, ExperimentConfig, KernelConfig};
use crate::experiment::io::write_table_csv;
use crate::experiment::run::simulate;
use crate::metrics::MetricsRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    P,
    Sigma,
    N,
    Seed,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(SweepAxis::P),
            "sigma" => Ok(SweepAxis::Sigma),
            "N" | "n" => Ok(SweepAxis::N),
            "seed" => Ok(SweepAxis::Seed),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?} (expected p, sigma, N or seed)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub value: f64,
    /// Metrics of the run, or the message of the error that stopped it.
    pub outcome: std::result::Result<Vec<MetricsRow>, String>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub cells: Vec<SweepCell>,
}

fn integral(value: f64, what: &str) -> Result<u64> {
    if value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64 {
        Ok(value as u64)
    } else {
        Err(Error::Config(format!(
            "{what} must be a non-negative integer, got {value}"
        )))
    }
}

/// `base` with the swept parameter set to `value`.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    cfg.output_dir = None;
    match axis {
        SweepAxis::P => match &mut cfg.kernel {
            KernelConfig::PExponential { p, .. } => *p = value,
            _ => return Err(Error::Config("a p sweep needs a p_exponential kernel".into())),
        },
        SweepAxis::Sigma => match &mut cfg.kernel {
            KernelConfig::PExponential { sigma, .. } => *sigma = Bandwidth::Fixed(value),
            _ => return Err(Error::Config("a sigma sweep needs a p_exponential kernel".into())),
        },
        SweepAxis::N => cfg.n = integral(value, "N")? as usize,
        SweepAxis::Seed => cfg.seed = integral(value, "seed")?,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one experiment per value, in parallel.
///
/// Every cell keeps the base seed (except on the seed axis), so cells share
/// their initial particles and reference sample and differences between
/// cells come from the swept parameter alone. A failing cell is recorded and
/// the remaining cells still run.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("a sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| apply_axis(base, axis, v))
        .collect::<Result<Vec<_>>>()?;
    let cells = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, &value)| SweepCell {
            value,
            outcome: simulate(cfg).map(|o| o.rows).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(SweepResult { axis, cells })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = (f64, &str)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c.value, e.as_str())))
    }

    /// One row per `(value, t)` with the metrics of that cell.
    pub fn long_rows(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for c in &self.cells {
            if let Ok(rows) = &c.outcome {
                for r in rows {
                    out.push(vec![
                        c.value,
                        r.time,
                        r.grad_evals as f64,
                        r.pair_evals as f64,
                        r.w1.unwrap_or(f64::NAN),
                        r.stein_fisher.unwrap_or(f64::NAN),
                    ]);
                }
            }
        }
        out
    }

    /// Per record time: mean and sample standard deviation of W1, Stein-Fisher
    /// and gradient evaluations over the successful cells.
    pub fn summary_rows(&self) -> Vec<Vec<f64>> {
        let ok: Vec<&Vec<MetricsRow>> = self.cells.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
        let Some(first) = ok.first() else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity(first.len());
        for (i, r0) in first.iter().enumerate() {
            let at: Vec<&MetricsRow> = ok.iter().filter_map(|rows| rows.get(i)).collect();
            let col = |f: &dyn Fn(&MetricsRow) -> Option<f64>| -> Vec<f64> { at.iter().filter_map(|r| f(r)).collect() };
            let (w_m, w_s) = mean_std(&col(&|r| r.w1));
            let (s_m, s_s) = mean_std(&col(&|r| r.stein_fisher));
            let (g_m, _) = mean_std(&col(&|r| Some(r.grad_evals as f64)));
            out.push(vec![r0.time, at.len() as f64, g_m, w_m, w_s, s_m, s_s]);
        }
        out
    }

    /// Writes `sweep.csv`, `failures.csv` when any cell failed, and for seed
    /// sweeps `summary.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_table_csv(
            &dir.join("sweep.csv"),
            &["value", "t", "grad_evals", "pair_evals", "w1", "stein_fisher"],
            &self.long_rows(),
        )?;
        let failures: Vec<_> = self.failures().collect();
        if !failures.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("failures.csv"))?;
            w.write_record(["value", "error"])?;
            for (v, e) in failures {
                w.write_record([v.to_string(), e.to_string()])?;
            }
            w.flush()?;
        }
        if self.axis == SweepAxis::Seed {
            write_table_csv(
                &dir.join("summary.csv"),
                &[
                    "t",
                    "runs",
                    "grad_evals_mean",
                    "w1_mean",
                    "w1_std",
                    "stein_fisher_mean",
                    "stein_fisher_std",
                ],
                &self.summary_rows(),
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn axis_values_are_checked() {
        let base = ExperimentConfig::preset("paper_1d").unwrap();
        assert!(apply_axis(&base, SweepAxis::N, 2.5).is_err());
        assert_eq!(apply_axis(&base, SweepAxis::N, 50.0).unwrap().n, 50);
        assert_eq!(
            apply_axis(&base, SweepAxis::Sigma, 0.5).unwrap().kernel.sigma(),
            Some(0.5)
        );
    }
}
