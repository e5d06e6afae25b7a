use crate::error::{Error, Result};
use crate::geometry::grid::Grid1D;
use crate::kernels::KernelSpec;
use crate::scalar::Real;
use crate::targets::TargetModel;

/// Points `y` (snapped to nodes) and `z` at which the terms are probed.
const PROBES: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];

/// Composite Simpson rule over `f(0..=m)` at spacing `h`, finishing with the
/// 3/8 rule when the number of intervals is odd.
fn simpson<T: Real>(f: &[T], h: T) -> T {
    let m = f.len() - 1;
    match m {
        0 => T::zero(),
        1 => (f[0] + f[1]) * h * T::lit(0.5),
        2 => (f[0] + T::lit(4.0) * f[1] + f[2]) * h / T::lit(3.0),
        _ => {
            let even = if m.is_multiple_of(2) { m } else { m - 3 };
            let mut s = T::zero();
            for i in (0..even).step_by(2) {
                s = s + f[i] + T::lit(4.0) * f[i + 1] + f[i + 2];
            }
            let mut total = s * h / T::lit(3.0);
            if even < m {
                let g = &f[even..];
                total = total + (g[0] + T::lit(3.0) * (g[1] + g[2]) + g[3]) * h * T::lit(3.0) / T::lit(8.0);
            }
            total
        }
    }
}

/// `∫ g(x) dx` over the grid for an integrand that is smooth on either side of
/// the node `ys` but may jump there; each side is integrated separately and
/// sees the matching one-sided limit.
fn split_integral<T: Real>(grid: &Grid1D<T>, ys: usize, g: &dyn Fn(T) -> T) -> T {
    let x = grid.nodes();
    let h = grid.spacing();
    let nudge = h * T::lit(1e-9);
    let mut left: Vec<T> = x[..=ys].iter().map(|&v| g(v)).collect();
    let mut right: Vec<T> = x[ys..].iter().map(|&v| g(v)).collect();
    left[ys] = g(x[ys] - nudge);
    right[0] = g(x[ys] + nudge);
    simpson(&left, h) + simpson(&right, h)
}

/// Largest magnitude of the two non-equilibrium terms of the Hessian at `ρ`,
/// probed over a fixed set of `(y, z)` pairs:
///
/// `I₁(y) ∂₁k(y,z)` with `I₁(y) = ∫(∂ₓk(x,y) - V'(x)k(x,y)) ρ(x) dx` and
/// `I₂(y) k(y,z)` with `I₂(y) = ∫(∂ₓ∂ᵧk - V'(x)∂ᵧk) ρ(x) dx`, where the mixed
/// derivative includes its point mass on the diagonal.
///
/// Both inner integrals are exact derivatives when `ρ = π`, so the result then
/// measures quadrature error only.
pub fn q_residual<T: Real>(k: &KernelSpec<T>, t: &TargetModel<T>, rho: &dyn Fn(T) -> T, grid: &Grid1D<T>) -> Result<T> {
    if t.dim() != 1 || matches!(k.required_dim(), Some(d) if d != 1) {
        return Err(Error::invalid("equilibrium residual is one-dimensional"));
    }
    let mut worst = T::zero();
    for &yp in &PROBES {
        let ys = grid.nearest(T::lit(yp));
        let y = grid.nodes()[ys];
        let jump = k.diagonal_jump_1d(y)?;
        let i1 = split_integral(grid, ys, &|x| {
            let (_, v1, _) = t.potential_derivs_1d(x);
            (k.d1_1d(x, y) - v1 * k.value(&[x], &[y])) * rho(x)
        });
        let i2 = split_integral(grid, ys, &|x| {
            let (_, v1, _) = t.potential_derivs_1d(x);
            // Off the diagonal, so the mixed derivative is defined.
            let mixed = k.mixed_trace(&[x], &[y]).unwrap_or(T::nan());
            (mixed - v1 * k.d1_1d(y, x)) * rho(x)
        }) + jump * rho(y);
        for &zp in &PROBES {
            let z = T::lit(zp);
            let t1 = (i1 * k.d1_1d(y, z)).abs();
            let t2 = (i2 * k.value(&[y], &[z])).abs();
            worst = worst.max(t1).max(t2);
        }
    }
    if !worst.is_finite() {
        return Err(Error::Instability(
            "equilibrium residual quadrature is not finite".into(),
        ));
    }
    Ok(worst)
}

/// [`q_residual`] at `ρ = π`.
pub fn q_equilibrium_residual<T: Real>(k: &KernelSpec<T>, t: &TargetModel<T>, grid: &Grid1D<T>) -> Result<T> {
    q_residual(k, t, &|x| t.density(&[x]), grid)
}
