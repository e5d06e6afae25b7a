use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{kl_quadrature, DensityField1D, Grid1D};
use crate::kernels::KernelSpec;
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::targets::TargetModel;

/// Largest quadrature mass that may be clipped away in one step.
pub const CLIP_TOLERANCE: f64 = 1e-10;

/// Discretization of the bracket `ρ' + V'ρ = π (ρ/π)'` on cell faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BracketForm {
    /// `π(m)(r₊ - r₋)/h` with `r = ρ/π` and logarithmic-mean face densities.
    /// The target is an exact steady state and the discrete KL decays exactly
    /// at the discrete Stein-Fisher rate.
    #[default]
    Ratio,
    /// `(ρ₊ - ρ₋)/h + V'(m)(ρ₊ + ρ₋)/2` with arithmetic-mean face densities;
    /// the target is only stationary up to the truncation error.
    Direct,
}

/// Precomputed face geometry for the Stein mean-field equation
/// `∂ρ = ∂ₓ(ρ u)`, `u(x) = ∫k(x,y)(ρ'(y) + V'(y)ρ(y)) dy`.
pub struct PdeOperator<T> {
    grid: Grid1D<T>,
    form: BracketForm,
    face_kernel: Matrix<T>,
    pi_nodes: Vec<T>,
    pi_faces: Vec<T>,
    dv_faces: Vec<T>,
}

impl<T: Real> PdeOperator<T> {
    pub fn new(grid: &Grid1D<T>, k: &KernelSpec<T>, t: &TargetModel<T>, form: BracketForm) -> Result<Self> {
        if t.dim() != 1 || matches!(k.required_dim(), Some(d) if d != 1) {
            return Err(Error::invalid("the mean-field solver is one-dimensional"));
        }
        let x = grid.nodes();
        let h = grid.spacing();
        let mids: Vec<T> = (0..x.len() - 1).map(|a| x[a] + T::lit(0.5) * h).collect();
        let nf = mids.len();
        let data: Vec<T> = (0..nf * nf)
            .into_par_iter()
            .map(|idx| k.value(&[mids[idx / nf]], &[mids[idx % nf]]))
            .collect();
        let face_kernel = Matrix::from_row_major(nf, nf, data)?;
        let pi_nodes = x.iter().map(|&v| t.density(&[v])).collect();
        let (pi_faces, dv_faces) = mids
            .iter()
            .map(|&m| {
                let (v, d1, _) = t.potential_derivs_1d(m);
                ((-v).exp(), d1)
            })
            .unzip();
        Ok(Self {
            grid: grid.clone(),
            form,
            face_kernel,
            pi_nodes,
            pi_faces,
            dv_faces,
        })
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    /// Writes `∂ρ/∂t` into `out` and returns the discrete Stein-Fisher
    /// information `h Σ_a b_a u_a`.
    pub fn rhs(&self, rho: &[T], out: &mut [T]) -> T {
        let n = rho.len();
        let h = self.grid.spacing();
        let half = T::lit(0.5);
        let (bracket, face_rho): (Vec<T>, Vec<T>) = (0..n - 1)
            .map(|a| match self.form {
                BracketForm::Ratio => {
                    let r0 = rho[a] / self.pi_nodes[a];
                    let r1 = rho[a + 1] / self.pi_nodes[a + 1];
                    let p = self.pi_faces[a];
                    (p * (r1 - r0) / h, p * log_mean(r0, r1))
                }
                BracketForm::Direct => {
                    let mean = half * (rho[a] + rho[a + 1]);
                    ((rho[a + 1] - rho[a]) / h + self.dv_faces[a] * mean, mean)
                }
            })
            .unzip();
        let hb: Vec<T> = bracket.iter().map(|&b| h * b).collect();
        let u = self.face_kernel.matvec(&hb);
        let w = self.grid.weights();
        for i in 0..n {
            let g_in = if i > 0 { face_rho[i - 1] * u[i - 1] } else { T::zero() };
            let g_out = if i + 1 < n { face_rho[i] * u[i] } else { T::zero() };
            out[i] = (g_out - g_in) / w[i];
        }
        hb.iter().zip(&u).map(|(&a, &b)| a * b).sum()
    }
}

/// Logarithmic mean `(b - a)/(ln b - ln a)`, with `L(a, a) = a` and `L(0, b) = 0`.
fn log_mean<T: Real>(a: T, b: T) -> T {
    if !(a > T::zero() && b > T::zero()) {
        return T::zero();
    }
    let x = b / a - T::one();
    if x.abs() < T::lit(1e-4) {
        a * (T::one() + x * T::lit(0.5) - x * x / T::lit(12.0))
    } else {
        (b - a) / (b.ln() - a.ln())
    }
}

/// Right-hand side of the Stein mean-field equation with the default
/// [`BracketForm::Ratio`] discretization and zero flux at both ends.
pub fn stein_pde_rhs<T: Real>(rho: &DensityField1D<T>, k: &KernelSpec<T>, t: &TargetModel<T>) -> Result<Vec<T>> {
    stein_pde_rhs_with(rho, k, t, BracketForm::Ratio)
}

pub fn stein_pde_rhs_with<T: Real>(
    rho: &DensityField1D<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    form: BracketForm,
) -> Result<Vec<T>> {
    let op = PdeOperator::new(rho.grid(), k, t, form)?;
    let mut out = vec![T::zero(); rho.values().len()];
    op.rhs(rho.values(), &mut out);
    Ok(out)
}

/// Result of [`evolve_pde`]. Series entries are `(t, value)`.
#[derive(Clone, Debug)]
pub struct PdeRun<T> {
    pub density: DensityField1D<T>,
    pub time: T,
    pub steps: usize,
    pub kl_series: Vec<(T, T)>,
    pub fisher_series: Vec<(T, T)>,
    /// `KL / I_Stein`, for inspection only.
    pub ratio_series: Vec<(T, T)>,
    /// Total quadrature mass removed by clipping.
    pub clipped_mass: T,
}

impl<T: Real> PdeRun<T> {
    /// Largest increase of KL between consecutive records (zero if monotone).
    pub fn max_kl_increase(&self) -> T {
        self.kl_series
            .windows(2)
            .map(|w| w[1].1 - w[0].1)
            .fold(T::zero(), T::max)
    }
}

struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Rk4<T> {
    fn new(n: usize) -> Self {
        let z = vec![T::zero(); n];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    /// Advances `y` by `h` and returns the Stein-Fisher value at the start.
    #[allow(clippy::needless_range_loop)]
    fn step(&mut self, op: &PdeOperator<T>, y: &mut [T], h: T) -> T {
        let half = h * T::lit(0.5);
        let fisher = op.rhs(y, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half * self.k1[i];
        }
        op.rhs(&self.tmp, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half * self.k2[i];
        }
        op.rhs(&self.tmp, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        op.rhs(&self.tmp, &mut self.k4);
        let sixth = h / T::lit(6.0);
        for i in 0..y.len() {
            y[i] = y[i] + sixth * (self.k1[i] + T::lit(2.0) * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        fisher
    }
}

/// Clips negative values; fails if more than [`CLIP_TOLERANCE`] mass is lost.
fn clip<T: Real>(grid: &Grid1D<T>, y: &mut [T], time: T) -> Result<T> {
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Blowup {
            index: i,
            detail: format!("density is not finite at t={time}"),
        });
    }
    let w = grid.weights();
    let lost: T = y
        .iter()
        .zip(w)
        .filter(|(v, _)| **v < T::zero())
        .map(|(&v, &wi)| -v * wi)
        .sum();
    if lost == T::zero() {
        return Ok(lost);
    }
    if lost > T::lit(CLIP_TOLERANCE) {
        return Err(Error::Instability(format!(
            "density lost {:e} mass to negativity at t={time}; use a smaller dt",
            lost.to_f64_lossy()
        )));
    }
    let before = grid.integrate(y);
    y.iter_mut().for_each(|v| *v = v.max(T::zero()));
    let after = grid.integrate(y);
    y.iter_mut().for_each(|v| *v = *v * before / after);
    Ok(lost)
}

/// RK4 integration of the mean-field equation from `rho0` to `t_end`.
///
/// KL and the discrete Stein-Fisher information are recorded at the start,
/// every `record_every` steps and at the end. A trial step compares one step
/// of size `dt` with two of size `dt/2` and rejects step sizes that are
/// obviously unstable for the grid.
pub fn evolve_pde<T: Real>(
    rho0: &DensityField1D<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    t_end: T,
    dt: T,
    record_every: usize,
) -> Result<PdeRun<T>> {
    evolve_pde_with(rho0, k, t, t_end, dt, record_every, BracketForm::Ratio)
}

pub fn evolve_pde_with<T: Real>(
    rho0: &DensityField1D<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    t_end: T,
    dt: T,
    record_every: usize,
    form: BracketForm,
) -> Result<PdeRun<T>> {
    if !(dt > T::zero()) || !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(Error::invalid("PDE needs dt > 0 and a finite t_end ≥ 0"));
    }
    if record_every == 0 {
        return Err(Error::invalid("record_every must be at least 1"));
    }
    let grid = rho0.grid();
    let op = PdeOperator::new(grid, k, t, form)?;
    let n = grid.len();
    let mut y = rho0.values().to_vec();
    let mut rk = Rk4::new(n);

    // Trial: one full step against two half steps.
    {
        let mut full = y.clone();
        let mut halves = y.clone();
        rk.step(&op, &mut full, dt);
        rk.step(&op, &mut halves, dt * T::lit(0.5));
        rk.step(&op, &mut halves, dt * T::lit(0.5));
        let scale = y.iter().copied().fold(T::zero(), T::max);
        let diff = full
            .iter()
            .zip(&halves)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        if !(diff <= T::lit(1e-3) * scale) {
            return Err(Error::Instability(format!(
                "trial step with dt={dt} is unstable on this grid (step-doubling difference {:e})",
                diff.to_f64_lossy()
            )));
        }
    }

    let steps = (t_end / dt).ceil().to_usize().unwrap_or(0);
    let mut run = PdeRun {
        density: rho0.clone(),
        time: T::zero(),
        steps,
        kl_series: Vec::new(),
        fisher_series: Vec::new(),
        ratio_series: Vec::new(),
        clipped_mass: T::zero(),
    };
    let mut scratch = vec![T::zero(); n];
    let mut record = |run: &mut PdeRun<T>, time: T, y: &[T]| -> Result<()> {
        let field = DensityField1D::new(grid.clone(), y.to_vec())?;
        let kl = kl_quadrature(&field, t)?.kl;
        let fisher = op.rhs(y, &mut scratch);
        run.kl_series.push((time, kl));
        run.fisher_series.push((time, fisher));
        run.ratio_series
            .push((time, if fisher > T::zero() { kl / fisher } else { T::nan() }));
        Ok(())
    };
    record(&mut run, T::zero(), &y)?;
    let mut time = T::zero();
    for s in 0..steps {
        let h = dt.min(t_end - time);
        rk.step(&op, &mut y, h);
        time = if s + 1 == steps { t_end } else { dt * T::count(s + 1) };
        run.clipped_mass = run.clipped_mass + clip(grid, &mut y, time)?;
        if (s + 1) % record_every == 0 || s + 1 == steps {
            record(&mut run, time, &y)?;
        }
    }
    run.density = DensityField1D::new(grid.clone(), y)?;
    run.time = time;
    Ok(run)
}
