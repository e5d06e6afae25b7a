use std::cell::Cell;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::scalar::Real;
use crate::targets::TargetModel;

use super::ensemble::{svgd_velocity_field, ParticleEnsemble};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Forward Euler with fixed step `dt_init`.
    Euler,
    /// Dormand–Prince 5(4) embedded pair with local error control.
    DormandPrince45,
    /// Trapezoidal rule solved by fixed-point iteration, fixed step `dt_init`
    /// halved whenever the iteration fails to converge.
    SemiImplicitTrapezoid,
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig<T> {
    pub method: Method,
    pub rtol: T,
    pub atol: T,
    pub dt_init: T,
    pub dt_max: T,
    pub max_steps: usize,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            method: Method::DormandPrince45,
            rtol: T::lit(1e-6),
            atol: T::lit(1e-8),
            dt_init: T::lit(1e-2),
            dt_max: T::lit(1.0),
            max_steps: 10_000_000,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn euler(dt: T) -> Self {
        Self {
            method: Method::Euler,
            dt_init: dt,
            dt_max: dt,
            ..Self::default()
        }
    }

    pub fn dopri(rtol: T, atol: T) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > T::zero() && self.atol > T::zero()) {
            return Err(Error::invalid("rtol and atol must be positive"));
        }
        if !(self.dt_init > T::zero()) || !(self.dt_init <= self.dt_max) {
            return Err(Error::invalid("need 0 < dt_init <= dt_max"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be positive"));
        }
        Ok(())
    }
}

/// One attempted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub accepted: bool,
    /// Right-hand-side evaluations spent on this attempt.
    pub rhs_evals: usize,
}

#[derive(Clone, Debug, Default)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub last_dt: f64,
    pub steps: Vec<StepRecord>,
}

impl IntegrationStats {
    fn record(&mut self, t: f64, dt: f64, accepted: bool, rhs_evals: usize) {
        if accepted {
            self.accepted += 1;
        } else {
            self.rejected += 1;
        }
        self.rhs_evals += rhs_evals;
        self.last_dt = dt;
        self.steps.push(StepRecord {
            t,
            dt,
            accepted,
            rhs_evals,
        });
    }

    fn nonconvergence(&self) -> Error {
        Error::NonConvergence {
            steps: self.accepted + self.rejected,
            last_dt: self.last_dt,
            rejections: self.rejected,
        }
    }
}

/// Times strictly inside `(t0, t_end]` at which the integrator must stop,
/// always ending with `t_end`.
fn stop_times<T: Real>(t0: T, t_end: T, schedule: &[T]) -> Result<Vec<T>> {
    if schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("record schedule must be strictly increasing"));
    }
    let mut stops: Vec<T> = schedule.iter().copied().filter(|&s| s > t0 && s < t_end).collect();
    stops.push(t_end);
    Ok(stops)
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(y)` from `t0` to `t_end`, calling `observe` at every
/// scheduled time in `(t0, t_end]` and at `t_end`.
///
/// Steps are shortened so that scheduled times are hit exactly.
pub fn integrate<T, F, O>(
    y: &mut [T],
    t0: T,
    t_end: T,
    cfg: &IntegratorConfig<T>,
    schedule: &[T],
    mut f: F,
    mut observe: O,
) -> Result<IntegrationStats>
where
    T: Real,
    F: FnMut(&[T], &mut [T]) -> Result<()>,
    O: FnMut(T, &[T]) -> Result<()>,
{
    cfg.validate()?;
    if !(t_end >= t0) {
        return Err(Error::invalid("end time precedes start time"));
    }
    let stops = stop_times(t0, t_end, schedule)?;
    let mut stats = IntegrationStats::default();
    if t_end == t0 {
        return Ok(stats);
    }
    match cfg.method {
        Method::Euler => euler(y, t0, &stops, cfg, &mut f, &mut observe, &mut stats)?,
        Method::DormandPrince45 => dopri(y, t0, &stops, cfg, &mut f, &mut observe, &mut stats)?,
        Method::SemiImplicitTrapezoid => trapezoid(y, t0, &stops, cfg, &mut f, &mut observe, &mut stats)?,
    }
    Ok(stats)
}

fn euler<T: Real>(
    y: &mut [T],
    t0: T,
    stops: &[T],
    cfg: &IntegratorConfig<T>,
    f: &mut impl FnMut(&[T], &mut [T]) -> Result<()>,
    observe: &mut impl FnMut(T, &[T]) -> Result<()>,
    stats: &mut IntegrationStats,
) -> Result<()> {
    let mut t = t0;
    let mut k = vec![T::zero(); y.len()];
    for &stop in stops {
        while t < stop {
            if stats.accepted >= cfg.max_steps {
                return Err(stats.nonconvergence());
            }
            let (dt, lands) = clip(cfg.dt_init, t, stop);
            f(y, &mut k)?;
            for (yi, &ki) in y.iter_mut().zip(&k) {
                *yi = *yi + dt * ki;
            }
            t = if lands { stop } else { t + dt };
            stats.record(t.to_f64_lossy(), dt.to_f64_lossy(), true, 1);
        }
        observe(t, y)?;
    }
    Ok(())
}

/// Step actually taken towards `stop`, and whether it lands on it.
#[inline]
fn clip<T: Real>(dt: T, t: T, stop: T) -> (T, bool) {
    let remaining = stop - t;
    // Stretch by up to 1% rather than leave a sliver behind.
    if dt * T::lit(1.01) >= remaining {
        (remaining, true)
    } else {
        (dt, false)
    }
}

fn error_norm<T: Real>(y: &[T], y_new: &[T], err: &[T], cfg: &IntegratorConfig<T>) -> T {
    let mut acc = T::zero();
    for ((&a, &b), &e) in y.iter().zip(y_new).zip(err) {
        let sc = cfg.atol + cfg.rtol * a.abs().max(b.abs());
        let r = e / sc;
        acc = acc + r * r;
    }
    (acc / T::count(y.len())).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn dopri<T: Real>(
    y: &mut [T],
    t0: T,
    stops: &[T],
    cfg: &IntegratorConfig<T>,
    f: &mut impl FnMut(&[T], &mut [T]) -> Result<()>,
    observe: &mut impl FnMut(T, &[T]) -> Result<()>,
    stats: &mut IntegrationStats,
) -> Result<()> {
    let n = y.len();
    let c = T::lit;
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut k5 = vec![T::zero(); n];
    let mut k6 = vec![T::zero(); n];
    let mut k7 = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];
    let mut y_new = vec![T::zero(); n];
    let mut err = vec![T::zero(); n];

    f(y, &mut k1)?;
    let mut pending_first_eval = 1;
    let mut t = t0;
    let mut h = cfg.dt_init;
    let safety = c(0.9);
    let (min_factor, max_factor) = (c(0.2), c(5.0));

    for &stop in stops {
        while t < stop {
            if stats.accepted + stats.rejected >= cfg.max_steps {
                return Err(stats.nonconvergence());
            }
            let (dt, lands) = clip(h, t, stop);

            for i in 0..n {
                tmp[i] = y[i] + dt * c(A21) * k1[i];
            }
            f(&tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = y[i] + dt * (c(A31) * k1[i] + c(A32) * k2[i]);
            }
            f(&tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = y[i] + dt * (c(A41) * k1[i] + c(A42) * k2[i] + c(A43) * k3[i]);
            }
            f(&tmp, &mut k4)?;
            for i in 0..n {
                tmp[i] = y[i] + dt * (c(A51) * k1[i] + c(A52) * k2[i] + c(A53) * k3[i] + c(A54) * k4[i]);
            }
            f(&tmp, &mut k5)?;
            for i in 0..n {
                tmp[i] =
                    y[i] + dt * (c(A61) * k1[i] + c(A62) * k2[i] + c(A63) * k3[i] + c(A64) * k4[i] + c(A65) * k5[i]);
            }
            f(&tmp, &mut k6)?;
            for i in 0..n {
                y_new[i] = y[i] + dt * (c(B1) * k1[i] + c(B3) * k3[i] + c(B4) * k4[i] + c(B5) * k5[i] + c(B6) * k6[i]);
            }
            f(&y_new, &mut k7)?;
            for i in 0..n {
                err[i] = dt
                    * (c(E1) * k1[i] + c(E3) * k3[i] + c(E4) * k4[i] + c(E5) * k5[i] + c(E6) * k6[i] + c(E7) * k7[i]);
            }
            let rhs = 6 + pending_first_eval;
            pending_first_eval = 0;
            let e = error_norm(y, &y_new, &err, cfg);
            if !e.is_finite() {
                stats.record(t.to_f64_lossy(), dt.to_f64_lossy(), false, rhs);
                return Err(Error::Blowup {
                    index: err.iter().position(|v| !v.is_finite()).unwrap_or(0),
                    detail: "local error estimate is not finite".into(),
                });
            }
            let factor = if e == T::zero() {
                max_factor
            } else {
                (safety * e.powf(c(-0.2))).max(min_factor).min(max_factor)
            };
            if e <= T::one() {
                y.copy_from_slice(&y_new);
                std::mem::swap(&mut k1, &mut k7);
                t = if lands { stop } else { t + dt };
                stats.record(t.to_f64_lossy(), dt.to_f64_lossy(), true, rhs);
                // A step clipped to hit a stop says nothing about the natural step size.
                if !lands || dt >= h {
                    h = (dt * factor).min(cfg.dt_max);
                }
            } else {
                stats.record(t.to_f64_lossy(), dt.to_f64_lossy(), false, rhs);
                h = dt * factor.min(T::one());
                if !(h > T::epsilon() * t.abs().max(T::one())) {
                    return Err(stats.nonconvergence());
                }
            }
        }
        observe(t, y)?;
    }
    Ok(())
}

const TRAPEZOID_MAX_ITERS: usize = 50;

#[allow(clippy::too_many_arguments)]
fn trapezoid<T: Real>(
    y: &mut [T],
    t0: T,
    stops: &[T],
    cfg: &IntegratorConfig<T>,
    f: &mut impl FnMut(&[T], &mut [T]) -> Result<()>,
    observe: &mut impl FnMut(T, &[T]) -> Result<()>,
    stats: &mut IntegrationStats,
) -> Result<()> {
    let n = y.len();
    let half = T::lit(0.5);
    let mut f0 = vec![T::zero(); n];
    let mut f1 = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut z_next = vec![T::zero(); n];
    let mut t = t0;
    let mut h = cfg.dt_init;
    f(y, &mut f0)?;
    let mut pending_first_eval = 1;

    for &stop in stops {
        while t < stop {
            if stats.accepted + stats.rejected >= cfg.max_steps {
                return Err(stats.nonconvergence());
            }
            let (dt, lands) = clip(h, t, stop);
            for i in 0..n {
                z[i] = y[i] + dt * f0[i];
            }
            let mut rhs = pending_first_eval;
            pending_first_eval = 0;
            let mut converged = false;
            for _ in 0..TRAPEZOID_MAX_ITERS {
                f(&z, &mut f1)?;
                rhs += 1;
                for i in 0..n {
                    z_next[i] = y[i] + dt * half * (f0[i] + f1[i]);
                }
                let mut acc = T::zero();
                for i in 0..n {
                    let sc = cfg.atol + cfg.rtol * z_next[i].abs();
                    let r = (z_next[i] - z[i]) / sc;
                    acc = acc + r * r;
                }
                std::mem::swap(&mut z, &mut z_next);
                let delta = (acc / T::count(n)).sqrt();
                if !delta.is_finite() {
                    break;
                }
                if delta <= T::lit(0.1) {
                    converged = true;
                    break;
                }
            }
            if converged {
                y.copy_from_slice(&z);
                // f0 at the new point; z has just been updated once more than f1.
                f(y, &mut f0)?;
                rhs += 1;
                t = if lands { stop } else { t + dt };
                stats.record(t.to_f64_lossy(), dt.to_f64_lossy(), true, rhs);
                if !lands && h < cfg.dt_init {
                    h = (h * T::lit(2.0)).min(cfg.dt_init);
                }
            } else {
                stats.record(t.to_f64_lossy(), dt.to_f64_lossy(), false, rhs);
                h = dt * half;
                if !(h > T::epsilon() * t.abs().max(T::one())) {
                    return Err(stats.nonconvergence());
                }
            }
        }
        observe(t, y)?;
    }
    Ok(())
}

/// Integrates the SVGD ODE from `e.time` to `t_end`.
///
/// `observe` sees the ensemble at each time of `schedule` inside
/// `(e.time, t_end)` and at `t_end`. Every right-hand-side evaluation adds
/// `N` to the gradient counter and `N²` to the pair counter.
pub fn evolve_deterministic<T, O>(
    e: &mut ParticleEnsemble<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    t_end: T,
    cfg: &IntegratorConfig<T>,
    schedule: &[T],
    mut observe: O,
) -> Result<IntegrationStats>
where
    T: Real,
    O: FnMut(&ParticleEnsemble<T>) -> Result<()>,
{
    if !(t_end > e.time) {
        return Err(Error::invalid(format!(
            "end time {t_end} must exceed the current time {}",
            e.time
        )));
    }
    let dim = e.dim();
    let t0 = e.time;
    let n = e.len() as u64;
    let (base_grad, base_pair) = (e.grad_evals(), e.pair_evals());
    let mut y = e.positions().to_vec();
    let calls = Cell::new(0u64);
    let f = |x: &[T], out: &mut [T]| {
        calls.set(calls.get() + 1);
        svgd_velocity_field(x, dim, k, t, out)
    };
    let mut snapshot = e.clone();
    let result = integrate(&mut y, t0, t_end, cfg, schedule, f, |time, state| {
        snapshot.set_positions(state)?;
        snapshot.time = time;
        snapshot.set_counters(base_grad + calls.get() * n, base_pair + calls.get() * n * n);
        observe(&snapshot)
    });
    e.set_counters(base_grad + calls.get() * n, base_pair + calls.get() * n * n);
    let stats = result?;
    e.set_positions(&y)?;
    e.time = t_end;
    Ok(stats)
}
