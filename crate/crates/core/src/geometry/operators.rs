use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::grid::{DensityField1D, Grid1D, ScalarField1D};
use crate::kernels::KernelSpec;
use crate::scalar::Real;
use crate::targets::TargetModel;

const PARALLEL_ROWS: usize = 256;

fn rows<T: Real>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// `out_i = Σ_j ω_j k(x_i, x_j) c_j`.
pub(crate) fn apply_kernel<T: Real>(k: &KernelSpec<T>, grid: &Grid1D<T>, c: &[T]) -> Vec<T> {
    let (x, w) = (grid.nodes(), grid.weights());
    rows(x.len(), |i| {
        let xi = [x[i]];
        (0..x.len()).map(|j| w[j] * k.value(&xi, &[x[j]]) * c[j]).sum()
    })
}

/// `out_i = Σ_j ω_j ∂₁k(x_i, x_j) c_j`, with the diagonal derivative of a kinked
/// kernel taken as the mean of its one-sided limits.
pub(crate) fn apply_kernel_d1<T: Real>(k: &KernelSpec<T>, grid: &Grid1D<T>, c: &[T]) -> Vec<T> {
    let (x, w) = (grid.nodes(), grid.weights());
    rows(x.len(), |i| {
        (0..x.len()).map(|j| w[j] * k.d1_1d(x[i], x[j]) * c[j]).sum()
    })
}

fn check_1d<T: Real>(k: &KernelSpec<T>, t: &TargetModel<T>) -> Result<()> {
    if t.dim() != 1 {
        return Err(Error::invalid("1D quadrature needs a one-dimensional target"));
    }
    if matches!(k.required_dim(), Some(d) if d != 1) {
        return Err(Error::invalid("kernel is not one-dimensional"));
    }
    Ok(())
}

/// Derivatives of the kernel must be integrable against smooth weights.
fn check_integrable_derivative<T: Real>(k: &KernelSpec<T>, grid: &Grid1D<T>) -> Result<()> {
    k.diagonal_jump_1d(grid.lo()).map(|_| ())
}

fn potential_derivs<T: Real>(t: &TargetModel<T>, grid: &Grid1D<T>) -> (Vec<T>, Vec<T>) {
    grid.nodes()
        .iter()
        .map(|&x| {
            let (_, d1, d2) = t.potential_derivs_1d(x);
            (d1, d2)
        })
        .unzip()
}

fn target_on<T: Real>(t: &TargetModel<T>, grid: &Grid1D<T>) -> Vec<T> {
    grid.nodes().iter().map(|&x| t.density(&[x])).collect()
}

/// `(T_{k,ρ} φ)(x_i) = Σ_j ω_j k(x_i, x_j) φ(x_j) ρ(x_j)`.
pub fn t_k_rho<T: Real>(
    k: &KernelSpec<T>,
    rho: &DensityField1D<T>,
    phi: &ScalarField1D<T>,
) -> Result<ScalarField1D<T>> {
    rho.grid().check_same(phi.grid())?;
    if matches!(k.required_dim(), Some(d) if d != 1) {
        return Err(Error::invalid("kernel is not one-dimensional"));
    }
    let c: Vec<T> = phi.values().iter().zip(rho.values()).map(|(&p, &r)| p * r).collect();
    ScalarField1D::new(rho.grid().clone(), apply_kernel(k, rho.grid(), &c))
}

/// Hessian of the KL divergence along `Ψ` at `ρ`, with its split into the
/// entropy part `Reg` and the potential part `Cost`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianForm<T> {
    pub total: T,
    pub reg: T,
    pub cost: T,
}

/// `Hess_ρ(Ψ, Ψ)` of `KL(·|π)` in the Stein geometry, 1D.
///
/// Every derivative that would fall on the kernel twice is moved onto `ρ`
/// and `π` by parts, so only `k` and `∂₁k` are needed. With `w = T_{k,ρ}Ψ'`
/// and `m = ρ' + V'ρ`:
///
/// `Hess = ∫Ψ'ρ A w' - ∫Ψ'ρ B w + ∫[(w')²ρ + w w'ρ' + V' w w' ρ + V'' w² ρ]`
///
/// where `A(y) = -∫k(x,y) m(x) dx` and `B(y) = -∫∂₁k(y,x) m(x) dx`. `Reg`
/// collects the `ρ'` parts, `Cost` the `V'ρ` and `V''` parts. The total is
/// assembled independently of the split.
pub fn hessian_form<T: Real>(
    rho: &DensityField1D<T>,
    psi: &ScalarField1D<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
) -> Result<HessianForm<T>> {
    check_1d(k, t)?;
    let grid = rho.grid();
    grid.check_same(psi.grid())?;
    check_integrable_derivative(k, grid)?;
    let r = rho.values();
    let dr = rho.derivative();
    let dpsi = psi.derivative();
    let (v1, v2) = potential_derivs(t, grid);
    let n = grid.len();

    let c: Vec<T> = (0..n).map(|i| dpsi[i] * r[i]).collect();
    let w = apply_kernel(k, grid, &c);
    let dw = apply_kernel_d1(k, grid, &c);

    // Contribution of the cross terms for a given `m`.
    let cross = |m: &[T]| -> T {
        let a = apply_kernel(k, grid, m);
        let b = apply_kernel_d1(k, grid, m);
        let v: Vec<T> = (0..n).map(|i| -c[i] * a[i] * dw[i] + c[i] * b[i] * w[i]).collect();
        grid.integrate(&v)
    };

    let m_reg = dr.clone();
    let m_cost: Vec<T> = (0..n).map(|i| v1[i] * r[i]).collect();
    let m_all: Vec<T> = (0..n).map(|i| dr[i] + v1[i] * r[i]).collect();

    let t3_reg: Vec<T> = (0..n).map(|i| dw[i] * dw[i] * r[i] + w[i] * dw[i] * dr[i]).collect();
    let t3_cost: Vec<T> = (0..n)
        .map(|i| v1[i] * w[i] * dw[i] * r[i] + v2[i] * w[i] * w[i] * r[i])
        .collect();
    let t3_all: Vec<T> = (0..n)
        .map(|i| dw[i] * dw[i] * r[i] + w[i] * dw[i] * dr[i] + v1[i] * w[i] * dw[i] * r[i] + v2[i] * w[i] * w[i] * r[i])
        .collect();

    let reg = cross(&m_reg) + grid.integrate(&t3_reg);
    let cost = cross(&m_cost) + grid.integrate(&t3_cost);
    let total = cross(&m_all) + grid.integrate(&t3_all);
    if !total.is_finite() {
        return Err(Error::Instability("Hessian quadrature is not finite".into()));
    }
    Ok(HessianForm { total, reg, cost })
}

/// `∫∫ φ'(y) k(y,z) ψ'(z) dρ(y) dρ(z)`.
pub fn stein_bilinear<T: Real>(
    rho: &DensityField1D<T>,
    phi: &ScalarField1D<T>,
    psi: &ScalarField1D<T>,
    k: &KernelSpec<T>,
) -> Result<T> {
    let grid = rho.grid();
    grid.check_same(phi.grid())?;
    grid.check_same(psi.grid())?;
    let b: Vec<T> = psi
        .derivative()
        .iter()
        .zip(rho.values())
        .map(|(&d, &r)| d * r)
        .collect();
    let kb = apply_kernel(k, grid, &b);
    let dphi = phi.derivative();
    let v: Vec<T> = (0..grid.len()).map(|i| dphi[i] * rho.values()[i] * kb[i]).collect();
    Ok(grid.integrate(&v))
}

/// Rayleigh coefficient `λ_Ψ = Hess_π(Ψ,Ψ) / ∫∫Ψ' k Ψ' dπ dπ`.
///
/// At equilibrium the Hessian reduces to `∫V'' w² dπ + ∫(w')² dπ` with
/// `w = T_{k,π}Ψ'`.
pub fn rayleigh<T: Real>(psi: &ScalarField1D<T>, k: &KernelSpec<T>, t: &TargetModel<T>) -> Result<T> {
    check_1d(k, t)?;
    let grid = psi.grid();
    check_integrable_derivative(k, grid)?;
    let pi = DensityField1D::from_target(grid.clone(), t)?;
    let p = pi.values();
    let dpsi = psi.derivative();
    let (_, v2) = potential_derivs(t, grid);
    let c: Vec<T> = dpsi.iter().zip(p).map(|(&d, &r)| d * r).collect();
    let w = apply_kernel(k, grid, &c);
    let dw = apply_kernel_d1(k, grid, &c);
    let n = grid.len();
    let num = grid.integrate(
        &(0..n)
            .map(|i| (v2[i] * w[i] * w[i] + dw[i] * dw[i]) * p[i])
            .collect::<Vec<_>>(),
    );
    let den = grid.integrate(&(0..n).map(|i| c[i] * w[i]).collect::<Vec<_>>());
    let scale = grid.integrate(&c.iter().map(|&v| v.abs()).collect::<Vec<_>>());
    if !(den > T::epsilon() * scale * scale) {
        return Err(Error::invalid("Rayleigh denominator vanishes (Ψ is constant)"));
    }
    Ok(num / den)
}

/// `∫V'' φ² dπ + ∫(φ')² dπ`.
pub fn be_1d<T: Real>(phi: &ScalarField1D<T>, t: &TargetModel<T>) -> Result<T> {
    if t.dim() != 1 {
        return Err(Error::invalid("1D quadrature needs a one-dimensional target"));
    }
    let grid = phi.grid();
    let p = target_on(t, grid);
    let (_, v2) = potential_derivs(t, grid);
    let f = phi.values();
    let df = phi.derivative();
    let v: Vec<T> = (0..grid.len())
        .map(|i| (v2[i] * f[i] * f[i] + df[i] * df[i]) * p[i])
        .collect();
    Ok(grid.integrate(&v))
}

/// Norm of `φ` in the RKHS of the weighted Matérn kernel:
/// `∫(π^{1/2}φ)² + ((π^{1/2}φ)')² dx`.
pub fn matern_rkhs_norm<T: Real>(phi: &ScalarField1D<T>, t: &TargetModel<T>) -> Result<T> {
    if t.dim() != 1 {
        return Err(Error::invalid("1D quadrature needs a one-dimensional target"));
    }
    let grid = phi.grid();
    let f: Vec<T> = grid
        .nodes()
        .iter()
        .zip(phi.values())
        .map(|(&x, &v)| (-T::lit(0.5) * t.potential(&[x])).exp() * v)
        .collect();
    let df = grid.derivative(&f);
    let v: Vec<T> = f.iter().zip(&df).map(|(&a, &b)| a * a + b * b).collect();
    Ok(grid.integrate(&v))
}

/// `KL(ρ|π) = Reg(ρ) + Cost(ρ)` with `Reg = ∫ρ log ρ` and `Cost = ∫Vρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlDecomposition<T> {
    pub kl: T,
    pub reg: T,
    pub cost: T,
}

/// KL divergence by quadrature, `0 log 0 = 0`. `V` is the normalized negative
/// log density, so no additive constant appears.
pub fn kl_quadrature<T: Real>(rho: &DensityField1D<T>, t: &TargetModel<T>) -> Result<KlDecomposition<T>> {
    if t.dim() != 1 {
        return Err(Error::invalid("1D quadrature needs a one-dimensional target"));
    }
    let grid = rho.grid();
    let r = rho.values();
    let pot: Vec<T> = grid.nodes().iter().map(|&x| t.potential(&[x])).collect();
    let ent: Vec<T> = r
        .iter()
        .map(|&v| if v > T::zero() { v * v.ln() } else { T::zero() })
        .collect();
    let cst: Vec<T> = r.iter().zip(&pot).map(|(&v, &p)| v * p).collect();
    let kl: Vec<T> = ent.iter().zip(&cst).map(|(&a, &b)| a + b).collect();
    Ok(KlDecomposition {
        kl: grid.integrate(&kl),
        reg: grid.integrate(&ent),
        cost: grid.integrate(&cst),
    })
}

/// `I_Stein(ρ|π) = ∫∫ (ρ/π)'(y) k(y,z) (ρ/π)'(z) dπ(y) dπ(z)`, evaluated through
/// `(ρ/π)' π = ρ' + V'ρ` so that the ratio is never formed.
pub fn stein_fisher_quadrature<T: Real>(rho: &DensityField1D<T>, k: &KernelSpec<T>, t: &TargetModel<T>) -> Result<T> {
    check_1d(k, t)?;
    let grid = rho.grid();
    let (v1, _) = potential_derivs(t, grid);
    let m: Vec<T> = rho
        .derivative()
        .iter()
        .zip(rho.values())
        .zip(&v1)
        .map(|((&d, &r), &g)| d + g * r)
        .collect();
    let km = apply_kernel(k, grid, &m);
    Ok(grid.integrate(&m.iter().zip(&km).map(|(&a, &b)| a * b).collect::<Vec<_>>()))
}
