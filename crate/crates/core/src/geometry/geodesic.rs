use crate::error::{Error, Result};
use crate::geometry::grid::{DensityField1D, Grid1D, ScalarField1D};
use crate::kernels::KernelSpec;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Largest tolerated negative density value before a step is rejected.
const POSITIVITY_SLACK: f64 = 1e-12;
/// Number of successive halvings of `dt` before giving up.
const MAX_HALVINGS: usize = 30;
/// Snapshots kept per trajectory (plus the initial state).
const SNAPSHOTS: usize = 100;

/// Output of [`geodesic_shoot`]. Speed and mass are recorded after every step,
/// field snapshots at roughly [`SNAPSHOTS`] evenly spaced steps.
#[derive(Clone, Debug)]
pub struct GeodesicTrajectory<T> {
    pub snapshot_times: Vec<T>,
    pub densities: Vec<DensityField1D<T>>,
    pub potentials: Vec<ScalarField1D<T>>,
    pub times: Vec<T>,
    pub speeds: Vec<T>,
    pub masses: Vec<T>,
    pub rejected_steps: usize,
}

impl<T: Real> GeodesicTrajectory<T> {
    /// `max_t |s(t) - s(0)| / s(0)`.
    pub fn speed_drift(&self) -> T {
        let s0 = self.speeds[0];
        let dev = self.speeds.iter().map(|&s| (s - s0).abs()).fold(T::zero(), T::max);
        if s0 > T::zero() {
            dev / s0
        } else {
            dev
        }
    }

    /// `max_t |∫ρ_t - ∫ρ_0|`.
    pub fn mass_drift(&self) -> T {
        let m0 = self.masses[0];
        self.masses.iter().map(|&m| (m - m0).abs()).fold(T::zero(), T::max)
    }
}

/// Hamiltonian face discretization: `ρ̄_a` and `DΨ_a` live on the cell faces,
/// `u_a = Σ_b h k(m_a, m_b) DΨ_b ρ̄_b` is the velocity `T_{k,ρ}Ψ'` there and
/// the speed is `s = h Σ_a ρ̄_a DΨ_a u_a`.
struct FaceSystem<'a, T> {
    grid: &'a Grid1D<T>,
    kernel: Matrix<T>,
}

impl<'a, T: Real> FaceSystem<'a, T> {
    fn new(grid: &'a Grid1D<T>, k: &KernelSpec<T>) -> Self {
        let h = grid.spacing();
        let x = grid.nodes();
        let mids: Vec<T> = (0..x.len() - 1).map(|a| x[a] + T::lit(0.5) * h).collect();
        let kernel = Matrix::from_fn(mids.len(), mids.len(), |a, b| k.value(&[mids[a]], &[mids[b]]));
        Self { grid, kernel }
    }

    /// Returns `(DΨ, u, speed)`.
    fn faces(&self, rho: &[T], psi: &[T]) -> (Vec<T>, Vec<T>, T) {
        let h = self.grid.spacing();
        let nf = rho.len() - 1;
        let dpsi: Vec<T> = (0..nf).map(|a| (psi[a + 1] - psi[a]) / h).collect();
        let c: Vec<T> = (0..nf)
            .map(|a| h * dpsi[a] * T::lit(0.5) * (rho[a] + rho[a + 1]))
            .collect();
        let u = self.kernel.matvec(&c);
        let speed = c.iter().zip(&u).map(|(&a, &b)| a * b).sum();
        (dpsi, u, speed)
    }

    fn rhs(&self, y: &[T], dy: &mut [T]) {
        let n = self.grid.len();
        let (rho, psi) = y.split_at(n);
        let (drho, dpsi_dt) = dy.split_at_mut(n);
        let (dpsi, u, _) = self.faces(rho, psi);
        let h = self.grid.spacing();
        let w = self.grid.weights();
        let half = T::lit(0.5);
        let flux = |a: usize| half * (rho[a] + rho[a + 1]) * u[a];
        let du = |a: usize| dpsi[a] * u[a];
        for i in 0..n {
            let (f_in, d_in) = if i > 0 {
                (flux(i - 1), du(i - 1))
            } else {
                (T::zero(), T::zero())
            };
            let (f_out, d_out) = if i + 1 < n {
                (flux(i), du(i))
            } else {
                (T::zero(), T::zero())
            };
            drho[i] = (f_in - f_out) / w[i];
            dpsi_dt[i] = -(h * half / w[i]) * (d_in + d_out);
        }
    }

    fn speed(&self, y: &[T]) -> T {
        let n = self.grid.len();
        self.faces(&y[..n], &y[n..]).2
    }
}

/// Discrete speed `∫∫Ψ'(y) k(y,z) Ψ'(z) dρ dρ` of the face scheme.
pub fn geodesic_speed<T: Real>(rho: &DensityField1D<T>, psi: &ScalarField1D<T>, k: &KernelSpec<T>) -> Result<T> {
    rho.grid().check_same(psi.grid())?;
    Ok(FaceSystem::new(rho.grid(), k).faces(rho.values(), psi.values()).2)
}

/// Rescales `Ψ` so that the geodesic starts with unit speed.
pub fn unit_speed<T: Real>(
    rho: &DensityField1D<T>,
    psi: &ScalarField1D<T>,
    k: &KernelSpec<T>,
) -> Result<ScalarField1D<T>> {
    let s = geodesic_speed(rho, psi, k)?;
    if !(s > T::zero()) {
        return Err(Error::invalid("initial velocity has zero speed"));
    }
    Ok(psi.scaled(T::one() / s.sqrt()))
}

/// Shoots the geodesic `∂ρ + ∂(ρ T_{k,ρ}Ψ') = 0`, `∂Ψ + Ψ' T_{k,ρ}Ψ' = 0`
/// from `(ρ₀, Ψ₀)` with classical RK4 on the face scheme (zero flux at the
/// ends). Steps that push the density below zero are retried with half the
/// step size.
pub fn geodesic_shoot<T: Real>(
    rho0: &DensityField1D<T>,
    psi0: &ScalarField1D<T>,
    k: &KernelSpec<T>,
    horizon: T,
    dt: T,
) -> Result<GeodesicTrajectory<T>> {
    let grid = rho0.grid();
    grid.check_same(psi0.grid())?;
    if matches!(k.required_dim(), Some(d) if d != 1) {
        return Err(Error::invalid("kernel is not one-dimensional"));
    }
    if !(dt > T::zero()) || !(horizon >= T::zero()) || !horizon.is_finite() {
        return Err(Error::invalid("geodesic needs dt > 0 and a finite horizon ≥ 0"));
    }
    let n = grid.len();
    if rho0.values()[1..n - 1].iter().any(|&r| !(r > T::zero())) {
        return Err(Error::invalid("initial density must be positive inside the grid"));
    }
    let sys = FaceSystem::new(grid, k);
    let mut y: Vec<T> = rho0.values().iter().chain(psi0.values()).copied().collect();
    let planned = (horizon / dt).ceil().to_usize().unwrap_or(0).max(1);
    let stride = (planned / SNAPSHOTS).max(1);

    let mut traj = GeodesicTrajectory {
        snapshot_times: Vec::new(),
        densities: Vec::new(),
        potentials: Vec::new(),
        times: vec![T::zero()],
        speeds: vec![sys.speed(&y)],
        masses: vec![grid.integrate(&y[..n])],
        rejected_steps: 0,
    };
    let snapshot = |traj: &mut GeodesicTrajectory<T>, t: T, y: &[T]| -> Result<()> {
        let rho: Vec<T> = y[..n].iter().map(|&r| r.max(T::zero())).collect();
        traj.snapshot_times.push(t);
        traj.densities.push(DensityField1D::new(grid.clone(), rho)?);
        traj.potentials.push(ScalarField1D::new(grid.clone(), y[n..].to_vec())?);
        Ok(())
    };
    snapshot(&mut traj, T::zero(), &y)?;

    let mut k1 = vec![T::zero(); 2 * n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    let mut t = T::zero();
    let mut step_dt = dt;
    let mut halvings = 0;
    let mut steps = 0usize;
    while t < horizon {
        let h = step_dt.min(horizon - t);
        let half = h * T::lit(0.5);
        sys.rhs(&y, &mut k1);
        tmp.iter_mut()
            .zip(&y)
            .zip(&k1)
            .for_each(|((o, &a), &b)| *o = a + half * b);
        sys.rhs(&tmp, &mut k2);
        tmp.iter_mut()
            .zip(&y)
            .zip(&k2)
            .for_each(|((o, &a), &b)| *o = a + half * b);
        sys.rhs(&tmp, &mut k3);
        tmp.iter_mut().zip(&y).zip(&k3).for_each(|((o, &a), &b)| *o = a + h * b);
        sys.rhs(&tmp, &mut k4);
        let sixth = h / T::lit(6.0);
        for i in 0..2 * n {
            tmp[i] = y[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        if let Some(i) = tmp.iter().position(|v| !v.is_finite()) {
            return Err(Error::Blowup {
                index: i % n,
                detail: format!("geodesic state is not finite at t={t}"),
            });
        }
        let min_rho = tmp[..n].iter().copied().fold(T::infinity(), T::min);
        if min_rho < -T::lit(POSITIVITY_SLACK) {
            traj.rejected_steps += 1;
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::NonConvergence {
                    steps,
                    last_dt: step_dt.to_f64_lossy(),
                    rejections: traj.rejected_steps,
                });
            }
            step_dt = step_dt * T::lit(0.5);
            continue;
        }
        std::mem::swap(&mut y, &mut tmp);
        t = if horizon - t <= step_dt { horizon } else { t + h };
        steps += 1;
        traj.times.push(t);
        traj.speeds.push(sys.speed(&y));
        traj.masses.push(grid.integrate(&y[..n]));
        if steps.is_multiple_of(stride) || t >= horizon {
            snapshot(&mut traj, t, &y)?;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_velocity_is_stationary() {
        let g = Grid1D::new(-6.0, 6.0, 65).unwrap();
        let rho = DensityField1D::from_fn(g.clone(), |x: f64| (-0.5 * x * x).exp()).unwrap();
        let psi = ScalarField1D::zeros(g);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let tr = geodesic_shoot(&rho, &psi, &k, 0.5, 0.1).unwrap();
        let last = tr.densities.last().unwrap();
        assert_eq!(last.values(), rho.values());
        assert!(tr.potentials.last().unwrap().values().iter().all(|&v| v == 0.0));
    }
}
