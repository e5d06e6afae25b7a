use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::{IntegratorConfig, Method};
use crate::error::{Error, Result};
use crate::kernels::{median_bandwidth, KernelSpec};
use crate::linalg::Matrix;
use crate::targets::{paper_targets, TargetModel};

/// `"paper_1d"`, `"paper_2d"` or an explicit distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetConfig {
    Preset(String),
    Explicit(TargetSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covs: Vec<Vec<Vec<f64>>>,
    },
}

impl TargetConfig {
    pub fn build(&self) -> Result<TargetModel<f64>> {
        match self {
            TargetConfig::Preset(name) => match name.as_str() {
                "paper_1d" => Ok(paper_targets().0),
                "paper_2d" => Ok(paper_targets().1),
                other => Err(Error::Config(format!("unknown target preset {other:?}"))),
            },
            TargetConfig::Explicit(TargetSpec::Gaussian { mean, cov }) => {
                TargetModel::gaussian(mean.clone(), Matrix::from_rows(cov)?)
            }
            TargetConfig::Explicit(TargetSpec::GaussianMixture { weights, means, covs }) => {
                let covs = covs.iter().map(|c| Matrix::from_rows(c)).collect::<Result<Vec<_>>>()?;
                TargetModel::mixture(weights.clone(), means.clone(), covs)
            }
        }
    }
}

/// Kernel bandwidth: a number, or `"median"` for the median heuristic on the
/// initial particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    Rule(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    PExponential { p: f64, sigma: Bandwidth },
    WeightedMatern,
    Polynomial { offset: bool },
    Sum { terms: Vec<KernelTerm> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTerm {
    pub weight: f64,
    pub kernel: KernelConfig,
}

impl KernelConfig {
    /// Replaces every `"median"` bandwidth by its value on `points`.
    pub fn resolve(&self, points: &[f64], dim: usize) -> Result<KernelConfig> {
        Ok(match self {
            KernelConfig::PExponential { p, sigma } => KernelConfig::PExponential {
                p: *p,
                sigma: match sigma {
                    Bandwidth::Fixed(s) => Bandwidth::Fixed(*s),
                    Bandwidth::Rule(r) if r == "median" => {
                        Bandwidth::Fixed(median_bandwidth(points, dim, *p, points.len() / dim)?)
                    }
                    Bandwidth::Rule(r) => {
                        return Err(Error::Config(format!("unknown bandwidth rule {r:?}")));
                    }
                },
            },
            KernelConfig::Sum { terms } => KernelConfig::Sum {
                terms: terms
                    .iter()
                    .map(|t| {
                        Ok(KernelTerm {
                            weight: t.weight,
                            kernel: t.kernel.resolve(points, dim)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            other => other.clone(),
        })
    }

    /// Builds the kernel; bandwidths must already be resolved.
    pub fn build(&self, target: &TargetModel<f64>) -> Result<KernelSpec<f64>> {
        match self {
            KernelConfig::PExponential { p, sigma } => match sigma {
                Bandwidth::Fixed(s) => KernelSpec::p_exponential(*p, *s),
                Bandwidth::Rule(r) => Err(Error::Config(format!("bandwidth {r:?} is not resolved"))),
            },
            KernelConfig::WeightedMatern => KernelSpec::weighted_matern(Arc::new(target.clone())),
            KernelConfig::Polynomial { offset } => Ok(KernelSpec::polynomial(*offset)),
            KernelConfig::Sum { terms } => KernelSpec::weighted_sum(
                terms
                    .iter()
                    .map(|t| Ok((t.weight, t.kernel.build(target)?)))
                    .collect::<Result<_>>()?,
            ),
        }
    }

    /// First `p_exponential` bandwidth, for reporting.
    pub fn sigma(&self) -> Option<f64> {
        match self {
            KernelConfig::PExponential {
                sigma: Bandwidth::Fixed(s),
                ..
            } => Some(*s),
            KernelConfig::Sum { terms } => terms.iter().find_map(|t| t.kernel.sigma()),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Euler,
    Dopri45,
    Trapezoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    pub method: MethodName,
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        let d = IntegratorConfig::<f64>::default();
        Self {
            method: MethodName::Dopri45,
            rtol: d.rtol,
            atol: d.atol,
            dt_init: d.dt_init,
            dt_max: d.dt_max,
            max_steps: d.max_steps,
        }
    }
}

impl IntegratorSettings {
    pub fn build(&self) -> Result<IntegratorConfig<f64>> {
        let cfg = IntegratorConfig {
            method: match self.method {
                MethodName::Euler => Method::Euler,
                MethodName::Dopri45 => Method::DormandPrince45,
                MethodName::Trapezoid => Method::SemiImplicitTrapezoid,
            },
            rtol: self.rtol,
            atol: self.atol,
            dt_init: self.dt_init,
            dt_max: self.dt_max,
            max_steps: self.max_steps,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsConfig {
    Deterministic,
    Stochastic { dt: f64 },
    Langevin { dt: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    StandardNormal,
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

/// Record times: an explicit increasing list or a uniform spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Times(Vec<f64>),
    Every { every: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W1Method {
    /// Exact in 1D, assignment against an `N`-point reference subsample otherwise.
    Auto,
    Exact1d,
    Assign,
    Sinkhorn,
    /// Skip the W1 column.
    None,
}

/// Declarative description of one particle run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetConfig,
    pub kernel: KernelConfig,
    pub n: usize,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default = "default_dynamics")]
    pub dynamics: DynamicsConfig,
    #[serde(default = "default_init")]
    pub init: InitConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default = "default_reference")]
    pub reference_size: usize,
    #[serde(default = "default_w1")]
    pub w1_method: W1Method,
    #[serde(default = "default_sinkhorn_eps")]
    pub sinkhorn_epsilon: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_dynamics() -> DynamicsConfig {
    DynamicsConfig::Deterministic
}

fn default_init() -> InitConfig {
    InitConfig::StandardNormal
}

fn default_reference() -> usize {
    100_000
}

fn default_w1() -> W1Method {
    W1Method::Auto
}

fn default_sinkhorn_eps() -> f64 {
    0.01
}

fn default_bins() -> usize {
    100
}

/// Number of uniformly spaced records when no schedule is given.
const DEFAULT_RECORDS: usize = 20;

impl ExperimentConfig {
    /// Desk-scale version of the benchmark runs: `N = 200`, `T = 2000`,
    /// Gaussian kernel with median bandwidth.
    pub fn preset(name: &str) -> Result<Self> {
        if name != "paper_1d" && name != "paper_2d" {
            return Err(Error::Config(format!("unknown preset {name:?}")));
        }
        Ok(Self {
            target: TargetConfig::Preset(name.into()),
            kernel: KernelConfig::PExponential {
                p: 2.0,
                sigma: Bandwidth::Rule("median".into()),
            },
            n: 200,
            t_end: 2000.0,
            integrator: IntegratorSettings::default(),
            dynamics: default_dynamics(),
            init: default_init(),
            seed: 0,
            schedule: None,
            reference_size: default_reference(),
            w1_method: default_w1(),
            sinkhorn_epsilon: default_sinkhorn_eps(),
            histogram_bins: default_bins(),
            output_dir: None,
        })
    }

    /// Parses JSON. A top-level `"preset"` key starts from that preset and
    /// overlays the remaining keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        if let Some(obj) = value.as_object_mut() {
            if let Some(preset) = obj.remove("preset") {
                let name = preset
                    .as_str()
                    .ok_or_else(|| Error::Config("preset must be a string".into()))?;
                let mut base = serde_json::to_value(Self::preset(name)?)?;
                merge(&mut base, Value::Object(obj.clone()));
                value = base;
            }
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config("t_end must be positive and finite".into()));
        }
        match self.dynamics {
            DynamicsConfig::Stochastic { dt } | DynamicsConfig::Langevin { dt } if !(dt > 0.0) => {
                return Err(Error::Config("stochastic time step must be positive".into()));
            }
            _ => {}
        }
        if let Some(Schedule::Times(ts)) = &self.schedule {
            if ts.windows(2).any(|w| !(w[0] < w[1])) || ts.iter().any(|t| !(*t >= 0.0)) {
                return Err(Error::Config(
                    "schedule must be strictly increasing and nonnegative".into(),
                ));
            }
        }
        if let Some(Schedule::Every { every }) = &self.schedule {
            if !(*every > 0.0) {
                return Err(Error::Config("schedule spacing must be positive".into()));
            }
        }
        if self.reference_size == 0 && self.w1_method != W1Method::None {
            return Err(Error::Config("reference_size must be positive".into()));
        }
        if !(self.sinkhorn_epsilon > 0.0) {
            return Err(Error::Config("sinkhorn_epsilon must be positive".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be positive".into()));
        }
        self.integrator.build()?;
        Ok(())
    }

    /// Record times in `(0, t_end]`; `t = 0` is always recorded separately.
    pub fn record_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = match &self.schedule {
            Some(Schedule::Times(ts)) => ts.iter().copied().filter(|&t| t > 0.0 && t < self.t_end).collect(),
            Some(Schedule::Every { every }) => {
                let count = (self.t_end / every).floor() as usize;
                (1..=count)
                    .map(|i| i as f64 * every)
                    .filter(|&t| t < self.t_end)
                    .collect()
            }
            None => (1..DEFAULT_RECORDS)
                .map(|i| self.t_end * i as f64 / DEFAULT_RECORDS as f64)
                .collect(),
        };
        times.push(self.t_end);
        times
    }

    pub fn init_law(&self, dim: usize) -> Result<TargetModel<f64>> {
        match &self.init {
            InitConfig::StandardNormal => TargetModel::standard_normal(dim),
            InitConfig::Gaussian { mean, cov } => {
                if mean.len() != dim {
                    return Err(Error::Config(format!(
                        "initial mean has dimension {} but the target has {dim}",
                        mean.len()
                    )));
                }
                TargetModel::gaussian(mean.clone(), Matrix::from_rows(cov)?)
            }
        }
    }
}

/// Recursive object merge; non-object values in `overlay` replace `base`.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // Tagged enums switch variant wholesale when the tag changes.
                    Some(slot) if slot.is_object() && v.is_object() && same_kind(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn same_kind(a: &Value, b: &Value) -> bool {
    match (a.get("kind"), b.get("kind")) {
        (Some(x), Some(y)) => x == y,
        (_, None) => true,
        (None, Some(_)) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_overlay_keeps_unspecified_fields() {
        let cfg = ExperimentConfig::from_json(r#"{"preset":"paper_1d","n":50,"kernel":{"p":1.0}}"#).unwrap();
        assert_eq!(cfg.n, 50);
        assert_eq!(cfg.t_end, 2000.0);
        assert_eq!(
            cfg.kernel,
            KernelConfig::PExponential {
                p: 1.0,
                sigma: Bandwidth::Rule("median".into())
            }
        );
    }

    #[test]
    fn explicit_mixture_parses() {
        let cfg = ExperimentConfig::from_json(
            r#"{"target":{"kind":"gaussian_mixture","weights":[0.5,0.5],"means":[[-1],[1]],"covs":[[[1]],[[1]]]},
                "kernel":{"kind":"p_exponential","p":2,"sigma":0.5},"n":10,"t_end":1}"#,
        )
        .unwrap();
        assert_eq!(cfg.target.build().unwrap().num_components(), 2);
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let err = ExperimentConfig::from_json(r#"{"preset":"paper_1d","particles":3}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn schedule_always_ends_at_t_end() {
        let mut cfg = ExperimentConfig::preset("paper_1d").unwrap();
        cfg.t_end = 10.0;
        cfg.schedule = Some(Schedule::Every { every: 4.0 });
        assert_eq!(cfg.record_times(), vec![4.0, 8.0, 10.0]);
    }
}
