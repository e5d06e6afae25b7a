use crate::dynamics::{evolve_deterministic, IntegratorConfig, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::geometry::{DensityField1D, Grid1D};
use crate::kernels::KernelSpec;
use crate::meanfield::pde::evolve_pde;
use crate::metrics::w1_1d;
use crate::scalar::Real;
use crate::targets::TargetModel;

/// Numerical settings of [`particles_vs_pde`].
#[derive(Clone, Debug)]
pub struct LimitOptions<T> {
    pub grid_nodes: usize,
    pub pde_dt: T,
    /// Number of midpoint quantiles used to represent the PDE solution.
    pub quantiles: usize,
    pub integrator: IntegratorConfig<T>,
}

impl<T: Real> Default for LimitOptions<T> {
    fn default() -> Self {
        Self {
            grid_nodes: 1024,
            pde_dt: T::lit(0.01),
            quantiles: 20_000,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// W1 distance between `N` particles and the mean-field solution, per seed
/// and averaged.
#[derive(Clone, Debug)]
pub struct LimitPoint<T> {
    pub n: usize,
    pub w1_mean: T,
    pub w1_per_seed: Vec<T>,
}

/// Midpoint quantiles `F⁻¹((j + ½)/m)` of a grid density, with the CDF
/// interpolated linearly between nodes.
pub fn density_quantiles<T: Real>(rho: &DensityField1D<T>, m: usize) -> Vec<T> {
    let grid = rho.grid();
    let x = grid.nodes();
    let r = rho.values();
    let h = grid.spacing();
    let mut cdf = vec![T::zero(); x.len()];
    for i in 1..x.len() {
        cdf[i] = cdf[i - 1] + T::lit(0.5) * h * (r[i - 1] + r[i]);
    }
    let total = cdf[x.len() - 1];
    let mut out = Vec::with_capacity(m);
    let mut i = 1;
    for j in 0..m {
        let target = (T::count(j) + T::lit(0.5)) / T::count(m) * total;
        while i < x.len() - 1 && cdf[i] < target {
            i += 1;
        }
        let span = cdf[i] - cdf[i - 1];
        let frac = if span > T::zero() {
            (target - cdf[i - 1]) / span
        } else {
            T::lit(0.5)
        };
        out.push(x[i - 1] + frac.max(T::zero()).min(T::one()) * h);
    }
    out
}

/// Runs the particle ODE for each `N` in `ns` and each seed from i.i.d. draws
/// of `init`, and compares the final empirical measure with the PDE solution
/// started from the grid restriction of `init`.
pub fn particles_vs_pde<T: Real>(
    ns: &[usize],
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    init: &TargetModel<T>,
    t_end: T,
    seeds: &[u64],
    opts: &LimitOptions<T>,
) -> Result<Vec<LimitPoint<T>>> {
    if t.dim() != 1 || init.dim() != 1 {
        return Err(Error::invalid("the mean-field comparison is one-dimensional"));
    }
    if ns.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("need at least one particle count and one seed"));
    }
    let grid = Grid1D::for_target(t, opts.grid_nodes)?;
    let rho0 = DensityField1D::from_target(grid, init)?;
    let pde = if t_end > T::zero() {
        evolve_pde(&rho0, k, t, t_end, opts.pde_dt, usize::MAX)?.density
    } else {
        rho0
    };
    let reference = density_quantiles(&pde, opts.quantiles);

    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut e = ParticleEnsemble::from_law(init, n, seed)?;
            if t_end > T::zero() {
                evolve_deterministic(&mut e, k, t, t_end, &opts.integrator, &[], |_| Ok(()))
                    .map_err(|err| err.context(&format!("N={n}, seed={seed}")))?;
            }
            per_seed.push(w1_1d(e.positions(), &reference)?);
        }
        let mean = per_seed.iter().copied().sum::<T>() / T::count(per_seed.len());
        out.push(LimitPoint {
            n,
            w1_mean: mean,
            w1_per_seed: per_seed,
        });
    }
    Ok(out)
}
