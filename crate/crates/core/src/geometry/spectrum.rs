use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::grid::Grid1D;
use crate::kernels::KernelSpec;
use crate::linalg::{cholesky, forward_substitute, jacobi_eigh, whiten, Matrix};
use crate::scalar::{sign0, Real};
use crate::targets::TargetModel;

pub const MAX_BASIS: usize = 512;

/// Galerkin matrices of the Stein generator on `L²(π)`.
///
/// The basis is `φ_b = π^{-1/2} h_b` with `h_b` the hat functions of a uniform
/// coarse mesh, which keeps the mass matrix well conditioned far in the tails.
#[derive(Clone, Debug)]
pub struct SteinForm<T> {
    /// `a(φ_b, φ_c) = ∫∫ φ_b'(y) k(y,z) φ_c'(z) dπ(y) dπ(z)`.
    pub stiffness: Matrix<T>,
    /// `⟨φ_b, φ_c⟩_{L²(π)}`.
    pub mass: Matrix<T>,
    /// `⟨φ_b, 1⟩_{L²(π)}`; the mean-zero constraint is `qᵀc = 0`.
    pub mean: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct SteinSpectrum<T> {
    /// Smallest eigenvalue on mean-zero fields (the Stein-Poincaré constant of the discretization).
    pub gap: T,
    /// Eigenvalues on mean-zero fields, ascending.
    pub eigenvalues: Vec<T>,
}

/// Assembles the Stein form with midpoint quadrature on the cells of `grid`.
pub fn stein_form<T: Real>(
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    grid: &Grid1D<T>,
    n_basis: usize,
) -> Result<SteinForm<T>> {
    if t.dim() != 1 || matches!(k.required_dim(), Some(d) if d != 1) {
        return Err(Error::invalid("the Stein generator spectrum is computed in 1D only"));
    }
    if !(3..=MAX_BASIS).contains(&n_basis) {
        return Err(Error::invalid(format!("basis size {n_basis} outside [3, {MAX_BASIS}]")));
    }
    if n_basis > grid.len() {
        return Err(Error::invalid("basis is finer than the quadrature grid"));
    }
    let lo = grid.lo();
    let h = grid.spacing();
    let big_h = (grid.hi() - lo) / T::count(n_basis - 1);
    let cells = grid.len() - 1;
    let mids: Vec<T> = (0..cells).map(|m| lo + (T::count(m) + T::lit(0.5)) * h).collect();

    // Per cell: first active hat, hat values and the derivatives of π^{1/2}φ_b.
    let mut first = vec![0usize; cells];
    let mut hat = vec![[T::zero(); 2]; cells];
    let mut dphi = vec![[T::zero(); 2]; cells];
    let mut sqrt_pi = vec![T::zero(); cells];
    for (m, &c) in mids.iter().enumerate() {
        let b0 = ((c - lo) / big_h).floor().to_usize().unwrap_or(0).min(n_basis - 2);
        first[m] = b0;
        let (v, v1, _) = t.potential_derivs_1d(c);
        sqrt_pi[m] = (-T::lit(0.5) * v).exp();
        for s in 0..2 {
            let node = lo + T::count(b0 + s) * big_h;
            let r = c - node;
            let value = (T::one() - r.abs() / big_h).max(T::zero());
            let slope = -sign0(r) / big_h;
            hat[m][s] = value;
            dphi[m][s] = slope + T::lit(0.5) * v1 * value;
        }
    }

    // G = K̃ D with K̃_mn = π^{1/2}(c_m) k(c_m, c_n) π^{1/2}(c_n), one row per cell.
    let g_rows: Vec<Vec<T>> = (0..cells)
        .into_par_iter()
        .map(|m| {
            let mut row = vec![T::zero(); n_basis];
            let cm = [mids[m]];
            for n in 0..cells {
                let kt = sqrt_pi[m] * k.value(&cm, &[mids[n]]) * sqrt_pi[n];
                row[first[n]] = row[first[n]] + kt * dphi[n][0];
                row[first[n] + 1] = row[first[n] + 1] + kt * dphi[n][1];
            }
            row
        })
        .collect();

    let h2 = h * h;
    let mut a = Matrix::zeros(n_basis, n_basis);
    let mut mass = Matrix::zeros(n_basis, n_basis);
    let mut mean = vec![T::zero(); n_basis];
    for m in 0..cells {
        for s in 0..2 {
            let b = first[m] + s;
            let coef = h2 * dphi[m][s];
            for (dst, &g) in a.row_mut(b).iter_mut().zip(&g_rows[m]) {
                *dst = *dst + coef * g;
            }
            for s2 in 0..2 {
                let c = first[m] + s2;
                mass[(b, c)] = mass[(b, c)] + h * hat[m][s] * hat[m][s2];
            }
            mean[b] = mean[b] + h * sqrt_pi[m] * hat[m][s];
        }
    }
    Ok(SteinForm {
        stiffness: a,
        mass,
        mean,
    })
}

/// Spectrum of the Stein generator restricted to mean-zero fields, from the
/// generalized eigenproblem `a(φ,φ) = λ ⟨φ,φ⟩_{L²(π)}`.
pub fn stein_generator_gap<T: Real>(
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    grid: &Grid1D<T>,
    n_basis: usize,
) -> Result<SteinSpectrum<T>> {
    let form = stein_form(k, t, grid, n_basis)?;
    let l = cholesky(&form.mass).map_err(|e| e.context("mass matrix"))?;
    let c = whiten(&form.stiffness, &l);

    // In whitened coordinates the constraint reads uᵀy = 0 with u = L⁻¹q.
    let mut u = form.mean.clone();
    forward_substitute(&l, &mut u);
    let norm = u.iter().map(|&x| x * x).sum::<T>().sqrt();
    if !(norm > T::zero()) {
        return Err(Error::Eigen("mean functional vanishes on the basis".into()));
    }
    u.iter_mut().for_each(|x| *x = *x / norm);

    // P C P with P = I - uuᵀ keeps the spectrum on uᵀy = 0 and maps u to 0.
    let cu = c.matvec(&u);
    let ucu: T = u.iter().zip(&cu).map(|(&a, &b)| a * b).sum();
    let projected = Matrix::from_fn(n_basis, n_basis, |i, j| {
        c[(i, j)] - u[i] * cu[j] - cu[i] * u[j] + u[i] * ucu * u[j]
    });
    let eig = jacobi_eigh(&projected).map_err(|e| {
        e.context(&format!(
            "Stein generator with {n_basis} basis functions (stiffness norm {:e})",
            form.stiffness.frobenius_norm().to_f64_lossy()
        ))
    })?;

    // Drop the eigenpair belonging to the excluded constant direction.
    let drop = (0..n_basis)
        .max_by(|&i, &j| {
            let ai = (0..n_basis).map(|r| eig.vectors[(r, i)] * u[r]).sum::<T>().abs();
            let aj = (0..n_basis).map(|r| eig.vectors[(r, j)] * u[r]).sum::<T>().abs();
            ai.partial_cmp(&aj).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let eigenvalues: Vec<T> = eig
        .values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != drop)
        .map(|(_, &v)| v)
        .collect();
    Ok(SteinSpectrum {
        gap: eigenvalues[0],
        eigenvalues,
    })
}
