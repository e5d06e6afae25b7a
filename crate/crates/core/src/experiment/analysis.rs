//! One-dimensional grid analyses driven by JSON: mean-field PDE runs,
//! geodesic shooting, plus the shorthand used on the command line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{Bandwidth, KernelConfig, TargetConfig, TargetSpec};
use crate::experiment::io::{self, write_table_csv};
use crate::geometry::{geodesic_shoot, unit_speed, DensityField1D, GeodesicTrajectory, Grid1D, ScalarField1D};
use crate::meanfield::{evolve_pde_with, BracketForm, PdeRun};
use crate::targets::TargetModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// A function on the line, evaluated on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// The target density.
    Target,
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// `Σ weight · N(mean, std²)` densities.
    Gaussians {
        terms: Vec<Bump>,
    },
    /// `Σ coeffs[i] xⁱ`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Two-column CSV `x, value`, interpolated linearly and held constant
    /// outside its range.
    File {
        path: PathBuf,
    },
    Sum {
        terms: Vec<FieldSpec>,
    },
}

fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x);
    let f = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + f * (ys[i] - ys[i - 1])
}

impl FieldSpec {
    pub fn eval(&self, grid: &Grid1D<f64>, target: &TargetModel<f64>) -> Result<Vec<f64>> {
        let x = grid.nodes();
        Ok(match self {
            FieldSpec::Target => x.iter().map(|&v| target.density(&[v])).collect(),
            FieldSpec::Gaussian { mean, std } => {
                if !(*std > 0.0) {
                    return Err(Error::Config("gaussian std must be positive".into()));
                }
                x.iter().map(|&v| normal_pdf(v, *mean, *std)).collect()
            }
            FieldSpec::Gaussians { terms } => {
                if terms.iter().any(|b| !(b.std > 0.0)) {
                    return Err(Error::Config("gaussian std must be positive".into()));
                }
                x.iter()
                    .map(|&v| terms.iter().map(|b| b.weight * normal_pdf(v, b.mean, b.std)).sum())
                    .collect()
            }
            FieldSpec::Polynomial { coeffs } => x
                .iter()
                .map(|&v| coeffs.iter().rev().fold(0.0, |acc, &c| acc * v + c))
                .collect(),
            FieldSpec::Sine {
                amplitude,
                frequency,
                phase,
            } => x.iter().map(|&v| amplitude * (frequency * v + phase).sin()).collect(),
            FieldSpec::File { path } => {
                let (xs, ys) = io::read_xy_csv(path)?;
                x.iter().map(|&v| interpolate(&xs, &ys, v)).collect()
            }
            FieldSpec::Sum { terms } => {
                let mut acc = vec![0.0; x.len()];
                for t in terms {
                    acc.iter_mut().zip(t.eval(grid, target)?).for_each(|(a, b)| *a += b);
                }
                acc
            }
        })
    }
}

/// Grid of a one-dimensional analysis: explicit `domain` or the truncation
/// domain of the target.
fn analysis_grid(target: &TargetModel<f64>, nodes: usize, domain: Option<(f64, f64)>) -> Result<Grid1D<f64>> {
    if target.dim() != 1 {
        return Err(Error::Config("grid analyses need a one-dimensional target".into()));
    }
    match domain {
        Some((lo, hi)) => Grid1D::new(lo, hi, nodes),
        None => Grid1D::for_target(target, nodes),
    }
    .map_err(|e| Error::Config(e.to_string()))
}

fn fixed_kernel(kernel: &KernelConfig, target: &TargetModel<f64>) -> Result<crate::kernels::KernelSpec<f64>> {
    kernel
        .build(target)
        .map_err(|e| Error::Config(format!("{e} (grid analyses need a numeric bandwidth)")))
}

fn default_nodes() -> usize {
    1024
}

fn default_record_every() -> usize {
    10
}

fn default_snapshots() -> usize {
    10
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormName {
    #[default]
    Ratio,
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    pub target: TargetConfig,
    pub kernel: KernelConfig,
    pub init: FieldSpec,
    #[serde(default = "default_nodes")]
    pub grid: usize,
    #[serde(default)]
    pub domain: Option<(f64, f64)>,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Density snapshots written at equally spaced times, ends included.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default)]
    pub form: FormName,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Density snapshots plus the concatenated KL / Stein-Fisher series.
#[derive(Clone, Debug)]
pub struct PdeOutput {
    pub snapshots: Vec<(f64, DensityField1D<f64>)>,
    pub kl_series: Vec<(f64, f64)>,
    pub fisher_series: Vec<(f64, f64)>,
    pub ratio_series: Vec<(f64, f64)>,
}

impl PdeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !(cfg.t_end > 0.0) || !(cfg.dt > 0.0) || cfg.record_every == 0 || cfg.snapshots == 0 {
            return Err(Error::Config(
                "pde needs t_end > 0, dt > 0, record_every ≥ 1, snapshots ≥ 1".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn run(&self) -> Result<PdeOutput> {
        let target = self.target.build()?;
        let grid = analysis_grid(&target, self.grid, self.domain)?;
        let kernel = fixed_kernel(&self.kernel, &target)?;
        let values = self.init.eval(&grid, &target)?;
        let mut rho = DensityField1D::new(grid, values)
            .and_then(DensityField1D::normalized)
            .map_err(|e| Error::Config(format!("initial density: {e}")))?;
        let form = match self.form {
            FormName::Ratio => BracketForm::Ratio,
            FormName::Direct => BracketForm::Direct,
        };
        let mut out = PdeOutput {
            snapshots: vec![(0.0, rho.clone())],
            kl_series: Vec::new(),
            fisher_series: Vec::new(),
            ratio_series: Vec::new(),
        };
        let segment = self.t_end / self.snapshots as f64;
        for s in 0..self.snapshots {
            let start = segment * s as f64;
            let run: PdeRun<f64> = evolve_pde_with(&rho, &kernel, &target, segment, self.dt, self.record_every, form)
                .map_err(|e| e.context(&format!("pde segment starting at t={start}")))?;
            // Later segments repeat the record at their start.
            let skip = usize::from(s > 0);
            let shift = |v: &[(f64, f64)]| v.iter().skip(skip).map(|&(t, x)| (start + t, x)).collect::<Vec<_>>();
            out.kl_series.extend(shift(&run.kl_series));
            out.fisher_series.extend(shift(&run.fisher_series));
            out.ratio_series.extend(shift(&run.ratio_series));
            rho = run.density;
            out.snapshots.push((start + segment, rho.clone()));
        }
        Ok(out)
    }
}

impl PdeOutput {
    /// `density_<k>.csv` (`x, rho`), `snapshot_times.csv`, `series.csv`
    /// (`t, kl, stein_fisher, ratio`) and a manifest.
    pub fn write(&self, dir: &Path) -> Result<io::Manifest> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (i, (_, rho)) in self.snapshots.iter().enumerate() {
            let name = format!("density_{i:03}.csv");
            let rows: Vec<Vec<f64>> = rho
                .grid()
                .nodes()
                .iter()
                .zip(rho.values())
                .map(|(&x, &r)| vec![x, r])
                .collect();
            write_table_csv(&dir.join(&name), &["x", "rho"], &rows)?;
            files.push(PathBuf::from(name));
        }
        let times: Vec<Vec<f64>> = self
            .snapshots
            .iter()
            .enumerate()
            .map(|(i, (t, _))| vec![i as f64, *t])
            .collect();
        write_table_csv(&dir.join("snapshot_times.csv"), &["snapshot", "t"], &times)?;
        files.push("snapshot_times.csv".into());
        let series: Vec<Vec<f64>> = self
            .kl_series
            .iter()
            .zip(&self.fisher_series)
            .zip(&self.ratio_series)
            .map(|((&(t, kl), &(_, f)), &(_, r))| vec![t, kl, f, r])
            .collect();
        write_table_csv(&dir.join("series.csv"), &["t", "kl", "stein_fisher", "ratio"], &series)?;
        files.push("series.csv".into());
        io::write_manifest(dir, 0, &files)
    }
}

fn default_true() -> bool {
    true
}

fn default_nodes_geodesic() -> usize {
    512
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicConfig {
    pub target: TargetConfig,
    pub kernel: KernelConfig,
    pub rho0: FieldSpec,
    pub psi0: FieldSpec,
    #[serde(default = "default_nodes_geodesic")]
    pub grid: usize,
    #[serde(default)]
    pub domain: Option<(f64, f64)>,
    pub horizon: f64,
    pub dt: f64,
    /// Rescale `psi0` to unit initial speed.
    #[serde(default = "default_true")]
    pub unit_speed: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl GeodesicConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !(cfg.horizon >= 0.0) || !(cfg.dt > 0.0) {
            return Err(Error::Config("geodesic needs horizon ≥ 0 and dt > 0".into()));
        }
        Ok(cfg)
    }

    pub fn run(&self) -> Result<GeodesicTrajectory<f64>> {
        let target = self.target.build()?;
        let grid = analysis_grid(&target, self.grid, self.domain)?;
        let kernel = fixed_kernel(&self.kernel, &target)?;
        let rho = DensityField1D::new(grid.clone(), self.rho0.eval(&grid, &target)?)
            .and_then(DensityField1D::normalized)
            .map_err(|e| Error::Config(format!("initial density: {e}")))?;
        let mut psi = ScalarField1D::new(grid.clone(), self.psi0.eval(&grid, &target)?)?;
        if self.unit_speed {
            psi = unit_speed(&rho, &psi, &kernel)?;
        }
        geodesic_shoot(&rho, &psi, &kernel, self.horizon, self.dt)
    }
}

/// `series.csv` (`t, speed, mass`), `snapshots.csv` (`t, x, rho, psi`) and a
/// manifest.
pub fn write_geodesic(traj: &GeodesicTrajectory<f64>, dir: &Path) -> Result<io::Manifest> {
    fs::create_dir_all(dir)?;
    let series: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.speeds)
        .zip(&traj.masses)
        .map(|((&t, &s), &m)| vec![t, s, m])
        .collect();
    write_table_csv(&dir.join("series.csv"), &["t", "speed", "mass"], &series)?;
    let mut snaps = Vec::new();
    for ((t, rho), psi) in traj.snapshot_times.iter().zip(&traj.densities).zip(&traj.potentials) {
        for ((x, r), p) in rho.grid().nodes().iter().zip(rho.values()).zip(psi.values()) {
            snaps.push(vec![*t, *x, *r, *p]);
        }
    }
    write_table_csv(&dir.join("snapshots.csv"), &["t", "x", "rho", "psi"], &snaps)?;
    io::write_manifest(dir, 0, &["series.csv".into(), "snapshots.csv".into()])
}

/// Reads `x, value` samples on a uniform grid.
pub fn read_grid_field(path: &Path) -> Result<(Grid1D<f64>, Vec<f64>)> {
    let (xs, ys) = io::read_xy_csv(path)?;
    let n = xs.len();
    let grid = Grid1D::new(xs[0], xs[n - 1], n)?;
    let h = grid.spacing();
    if xs.iter().zip(grid.nodes()).any(|(a, b)| (a - b).abs() > 1e-6 * h) {
        return Err(Error::invalid(format!("{}: x is not a uniform grid", path.display())));
    }
    Ok((grid, ys))
}

fn parse_num(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{what}: {s:?} is not a number")))
}

/// Kernel shorthand: `gaussian:SIGMA`, `laplace:SIGMA`, `pexp:P:SIGMA`,
/// `matern`, `poly` or `poly1` (with the constant offset).
pub fn parse_kernel(s: &str) -> Result<KernelConfig> {
    let parts: Vec<&str> = s.split(':').collect();
    let fixed = |p: f64, sigma: &str| -> Result<KernelConfig> {
        Ok(KernelConfig::PExponential {
            p,
            sigma: Bandwidth::Fixed(parse_num(sigma, "kernel bandwidth")?),
        })
    };
    match parts.as_slice() {
        ["gaussian", sigma] => fixed(2.0, sigma),
        ["laplace", sigma] => fixed(1.0, sigma),
        ["pexp", p, sigma] => fixed(parse_num(p, "kernel exponent")?, sigma),
        ["matern"] => Ok(KernelConfig::WeightedMatern),
        ["poly"] => Ok(KernelConfig::Polynomial { offset: false }),
        ["poly1"] => Ok(KernelConfig::Polynomial { offset: true }),
        _ => Err(Error::Config(format!(
            "unknown kernel {s:?} (gaussian:S, laplace:S, pexp:P:S, matern, poly, poly1)"
        ))),
    }
}

/// Target shorthand: `normal`, `normal:MEAN:STD` or a preset name.
pub fn parse_target(s: &str) -> Result<TargetConfig> {
    let parts: Vec<&str> = s.split(':').collect();
    let gaussian = |m: f64, sd: f64| {
        TargetConfig::Explicit(TargetSpec::Gaussian {
            mean: vec![m],
            cov: vec![vec![sd * sd]],
        })
    };
    match parts.as_slice() {
        ["normal"] => Ok(gaussian(0.0, 1.0)),
        ["normal", m, sd] => Ok(gaussian(parse_num(m, "target mean")?, parse_num(sd, "target std")?)),
        [name] => Ok(TargetConfig::Preset(name.to_string())),
        _ => Err(Error::Config(format!("unknown target {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_linear_and_clamped() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [0.0, 2.0, 0.0];
        assert_eq!(interpolate(&xs, &ys, 0.5), 1.0);
        assert_eq!(interpolate(&xs, &ys, 2.0), 1.0);
        assert_eq!(interpolate(&xs, &ys, -1.0), 0.0);
        assert_eq!(interpolate(&xs, &ys, 5.0), 0.0);
    }

    #[test]
    fn shorthand() {
        assert_eq!(parse_kernel("laplace:0.5").unwrap().sigma(), Some(0.5));
        assert!(parse_kernel("cauchy:1").is_err());
        assert_eq!(parse_target("normal:1:2").unwrap().build().unwrap().mean(), vec![1.0]);
    }

    #[test]
    fn polynomial_field() {
        let g = Grid1D::new(-1.0, 1.0, 3).unwrap();
        let t = TargetModel::standard_normal(1).unwrap();
        let v = FieldSpec::Polynomial {
            coeffs: vec![1.0, 0.0, 2.0],
        }
        .eval(&g, &t)
        .unwrap();
        assert_eq!(v, vec![3.0, 1.0, 3.0]);
    }

    #[test]
    fn pde_segments_join() {
        let cfg = PdeConfig::from_json(
            r#"{"target": "paper_1d", "kernel": {"kind": "p_exponential", "p": 2.0, "sigma": 1.0},
                "init": {"kind": "gaussian", "mean": 1.0, "std": 1.0}, "grid": 128, "domain": [-8, 8],
                "t_end": 0.2, "dt": 0.01, "record_every": 5, "snapshots": 2}"#,
        )
        .unwrap();
        let cfg = PdeConfig {
            target: parse_target("normal").unwrap(),
            ..cfg
        };
        let out = cfg.run().unwrap();
        assert_eq!(out.snapshots.len(), 3);
        let ts: Vec<f64> = out.kl_series.iter().map(|p| p.0).collect();
        assert!(ts.windows(2).all(|w| w[0] < w[1]), "{ts:?}");
        assert!((ts[ts.len() - 1] - 0.2).abs() < 1e-12);
    }
}
