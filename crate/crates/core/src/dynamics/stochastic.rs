use crate::error::{Error, Result};
use crate::kernels::{gram, gram_sqrt, KernelSpec};
use crate::scalar::Real;
use crate::targets::TargetModel;

use super::ensemble::{check_finite, potential_gradients, ParticleEnsemble};

/// Test function whose running time average is tracked along a trajectory.
pub type TestFn<'a, T> = &'a (dyn Fn(&[T]) -> T + Sync);

/// Drift of stochastic SVGD,
/// `b_i = (1/N) Σ_j [-k(x_i,x_j) ∇V(x_j) + ∇₁k(x_j, x_i)]`.
pub fn stochastic_drift<T: Real>(positions: &[T], dim: usize, k: &KernelSpec<T>, t: &TargetModel<T>) -> Result<Vec<T>> {
    let n = positions.len() / dim;
    let grads = potential_gradients(positions, dim, t);
    let inv_n = T::one() / T::count(n);
    let mut out = vec![T::zero(); positions.len()];
    let mut gk = vec![T::zero(); dim];
    for i in 0..n {
        let xi = &positions[i * dim..(i + 1) * dim];
        let v = &mut out[i * dim..(i + 1) * dim];
        for j in 0..n {
            let xj = &positions[j * dim..(j + 1) * dim];
            // ∇_{x_j} k(x_i, x_j) = ∇₁k(x_j, x_i) by symmetry of k.
            let kij = k.value_and_grad1(xj, xi, &mut gk);
            let gj = &grads[j * dim..(j + 1) * dim];
            for c in 0..dim {
                v[c] = v[c] - kij * gj[c] + gk[c];
            }
        }
        v.iter_mut().for_each(|c| *c = *c * inv_n);
    }
    check_finite(&out, dim, "stochastic drift")?;
    Ok(out)
}

fn validate<T: Real>(e: &ParticleEnsemble<T>, k: &KernelSpec<T>, t: &TargetModel<T>, dt: T) -> Result<()> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::invalid("time step must be positive"));
    }
    if t.dim() != e.dim() {
        return Err(Error::invalid("target and ensemble dimensions differ"));
    }
    if let Some(d) = k.required_dim() {
        if d != e.dim() {
            return Err(Error::invalid(format!("kernel needs dimension {d}")));
        }
    }
    Ok(())
}

/// One Euler–Maruyama step of stochastic SVGD with caller-supplied standard
/// normal noise `xi` (`N * d` values, row-major).
///
/// The noise enters as `sqrt(2 dt) Σ_j (G^{1/2})_{ij} ξ_j` with
/// `G = (k(x_i, x_j) / N)_{ij}`, recomputed from the current positions.
pub fn stochastic_step_with_noise<T: Real>(
    e: &mut ParticleEnsemble<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    dt: T,
    xi: &[T],
) -> Result<()> {
    validate(e, k, t, dt)?;
    if xi.len() != e.positions().len() {
        return Err(Error::invalid("noise buffer has the wrong length"));
    }
    let n = e.len();
    let dim = e.dim();
    let drift = stochastic_drift(e.positions(), dim, k, t)?;
    let g = gram(k, e.positions(), dim, T::one() / T::count(n))?;
    let s = gram_sqrt(&g)?;
    let amp = (T::lit(2.0) * dt).sqrt();
    let pos = e.positions_mut();
    for i in 0..n {
        let row = s.row(i);
        for c in 0..dim {
            let mut noise = T::zero();
            for j in 0..n {
                noise = noise + row[j] * xi[j * dim + c];
            }
            pos[i * dim + c] = pos[i * dim + c] + dt * drift[i * dim + c] + amp * noise;
        }
    }
    check_finite(e.positions(), dim, "position after stochastic step")?;
    e.count_rhs();
    e.time = e.time + dt;
    Ok(())
}

/// One Euler–Maruyama step of stochastic SVGD drawing noise from the ensemble's stream.
pub fn stochastic_step<T: Real>(
    e: &mut ParticleEnsemble<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    dt: T,
) -> Result<()> {
    let xi = draw_noise(e);
    stochastic_step_with_noise(e, k, t, dt, &xi)
}

fn draw_noise<T: Real>(e: &mut ParticleEnsemble<T>) -> Vec<T> {
    let len = e.positions().len();
    let rng = e.rng_mut();
    (0..len).map(|_| T::standard_normal(rng)).collect()
}

/// One Euler–Maruyama step of `N` independent overdamped Langevin chains,
/// `x ← x - ∇V(x) dt + sqrt(2 dt) ξ`.
pub fn langevin_step_with_noise<T: Real>(
    e: &mut ParticleEnsemble<T>,
    t: &TargetModel<T>,
    dt: T,
    xi: &[T],
) -> Result<()> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::invalid("time step must be positive"));
    }
    if t.dim() != e.dim() || xi.len() != e.positions().len() {
        return Err(Error::invalid("target, noise and ensemble shapes differ"));
    }
    let dim = e.dim();
    let grads = potential_gradients(e.positions(), dim, t);
    let amp = (T::lit(2.0) * dt).sqrt();
    for ((x, &g), &z) in e.positions_mut().iter_mut().zip(&grads).zip(xi) {
        *x = *x - dt * g + amp * z;
    }
    check_finite(e.positions(), dim, "position after Langevin step")?;
    e.count_gradients();
    e.time = e.time + dt;
    Ok(())
}

pub fn langevin_step<T: Real>(e: &mut ParticleEnsemble<T>, t: &TargetModel<T>, dt: T) -> Result<()> {
    let xi = draw_noise(e);
    langevin_step_with_noise(e, t, dt, &xi)
}

/// Summary of a fixed-step stochastic run.
#[derive(Clone, Debug)]
pub struct StochasticRun<T> {
    pub steps: usize,
    /// Left-point time averages `(1/T) ∫ (1/N) Σ_i φ(X_t^i) dt`, one per test function.
    pub time_averages: Vec<T>,
}

/// Shared driver: fixed steps of size `dt` (the last one shortened to hit each
/// scheduled time and `t_end`), with running time averages.
fn drive<T, S, O>(
    e: &mut ParticleEnsemble<T>,
    t_end: T,
    dt: T,
    tests: &[TestFn<'_, T>],
    schedule: &[T],
    mut step: S,
    mut observe: O,
) -> Result<StochasticRun<T>>
where
    T: Real,
    S: FnMut(&mut ParticleEnsemble<T>, T) -> Result<()>,
    O: FnMut(&ParticleEnsemble<T>) -> Result<()>,
{
    if !(t_end > e.time) {
        return Err(Error::invalid("end time must exceed the current time"));
    }
    if !(dt > T::zero()) {
        return Err(Error::invalid("time step must be positive"));
    }
    if schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("record schedule must be strictly increasing"));
    }
    let mut stops: Vec<T> = schedule.iter().copied().filter(|&s| s > e.time && s < t_end).collect();
    stops.push(t_end);

    let dim = e.dim();
    let inv_n = T::one() / T::count(e.len());
    let mut weighted = vec![T::zero(); tests.len()];
    let mut elapsed = T::zero();
    let mut steps = 0;
    for &stop in &stops {
        while e.time < stop {
            let remaining = stop - e.time;
            let (h, lands) = if dt * T::lit(1.01) >= remaining {
                (remaining, true)
            } else {
                (dt, false)
            };
            for (acc, phi) in weighted.iter_mut().zip(tests) {
                let mean = e.positions().chunks(dim).map(phi).sum::<T>() * inv_n;
                *acc = *acc + h * mean;
            }
            elapsed = elapsed + h;
            step(e, h)?;
            if lands {
                e.time = stop;
            }
            steps += 1;
        }
        observe(e)?;
    }
    Ok(StochasticRun {
        steps,
        time_averages: weighted.into_iter().map(|w| w / elapsed).collect(),
    })
}

/// Runs stochastic SVGD from `e.time` to `t_end` with step `dt`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_stochastic<T, O>(
    e: &mut ParticleEnsemble<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    t_end: T,
    dt: T,
    tests: &[TestFn<'_, T>],
    schedule: &[T],
    observe: O,
) -> Result<StochasticRun<T>>
where
    T: Real,
    O: FnMut(&ParticleEnsemble<T>) -> Result<()>,
{
    validate(e, k, t, dt)?;
    drive(
        e,
        t_end,
        dt,
        tests,
        schedule,
        |e, h| stochastic_step(e, k, t, h),
        observe,
    )
}

/// Runs `N` independent overdamped Langevin chains from `e.time` to `t_end`.
pub fn evolve_langevin<T, O>(
    e: &mut ParticleEnsemble<T>,
    t: &TargetModel<T>,
    t_end: T,
    dt: T,
    tests: &[TestFn<'_, T>],
    schedule: &[T],
    observe: O,
) -> Result<StochasticRun<T>>
where
    T: Real,
    O: FnMut(&ParticleEnsemble<T>) -> Result<()>,
{
    drive(e, t_end, dt, tests, schedule, |e, h| langevin_step(e, t, h), observe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::svgd_velocity;

    #[test]
    fn single_particle_reduces_to_langevin() {
        let t = TargetModel::<f64>::normal_1d(0.3, 1.5).unwrap();
        let k = KernelSpec::gaussian(0.7).unwrap();
        let mut a = ParticleEnsemble::new(vec![1.2], 1, 0).unwrap();
        let mut b = a.clone();
        stochastic_step_with_noise(&mut a, &k, &t, 0.01, &[0.4]).unwrap();
        langevin_step_with_noise(&mut b, &t, 0.01, &[0.4]).unwrap();
        assert!((a.positions()[0] - b.positions()[0]).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_is_a_drift_step() {
        let t = TargetModel::<f64>::standard_normal(2).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut e = ParticleEnsemble::new(vec![0.1, 0.5, -0.4, 0.2, 1.0, -1.0], 2, 0).unwrap();
        let before = e.positions().to_vec();
        let v = svgd_velocity(&mut e.clone(), &k, &t).unwrap();
        stochastic_step_with_noise(&mut e, &k, &t, 0.05, &[0.0; 6]).unwrap();
        for i in 0..6 {
            assert!((e.positions()[i] - (before[i] + 0.05 * v[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_test_function_averages_to_one() {
        let t = TargetModel::standard_normal(1).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut e = ParticleEnsemble::standard_normal(4, 1, 3).unwrap();
        let one = |_: &[f64]| 1.0;
        let run = evolve_stochastic(&mut e, &k, &t, 1.0, 0.03, &[&one], &[], |_| Ok(())).unwrap();
        assert_eq!(run.time_averages[0], 1.0);
        assert_eq!(e.time, 1.0);
    }

    #[test]
    fn langevin_zero_noise_is_gradient_descent() {
        let t = TargetModel::standard_normal(1).unwrap();
        let mut e = ParticleEnsemble::new(vec![2.0, -1.0], 1, 0).unwrap();
        langevin_step_with_noise(&mut e, &t, 0.1, &[0.0, 0.0]).unwrap();
        assert_eq!(e.positions(), &[1.8, -0.9]);
        assert_eq!(e.grad_evals(), 2);
    }
}
