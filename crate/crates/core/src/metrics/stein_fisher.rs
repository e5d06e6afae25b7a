use crate::dynamics::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::scalar::Real;
use crate::targets::TargetModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Statistic {
    /// Average over ordered pairs `i != j`; unbiased and defined for every kernel.
    #[default]
    U,
    /// Average over all `n²` pairs; needs a kernel that is smooth on the diagonal.
    V,
}

#[derive(Clone, Copy, Debug)]
pub struct SteinFisherEstimate<T> {
    pub value: T,
    /// Asymptotic standard error `sqrt(4 ζ₁/n + 2 ζ₂/(n(n-1)))` of the U-statistic.
    pub std_error: T,
}

/// Stein kernel `κ(y,z) = ∇V(y)·∇V(z) k(y,z) - ∇V(y)·∇₁k(z,y) - ∇V(z)·∇₁k(y,z) + tr ∇₁∇₂k(y,z)`.
#[inline]
fn stein_kernel<T: Real>(
    k: &KernelSpec<T>,
    y: &[T],
    z: &[T],
    gy: &[T],
    gz: &[T],
    tmp_yz: &mut [T],
    tmp_zy: &mut [T],
) -> Result<T> {
    let kyz = k.value_and_grad1(y, z, tmp_yz);
    k.value_and_grad1(z, y, tmp_zy);
    let mut acc = k.mixed_trace(y, z)?;
    for c in 0..y.len() {
        acc = acc + gy[c] * gz[c] * kyz - gy[c] * tmp_zy[c] - gz[c] * tmp_yz[c];
    }
    Ok(acc)
}

/// Kernel Stein estimate of the Stein-Fisher information `I_Stein(ρ|π)` from
/// samples of `ρ` (row-major, `dim` columns).
///
/// For kernels with a kink on the diagonal (p = 1) the distributional mixed
/// derivative carries a point mass there, which the U-statistic never sees: in
/// 1D with the Laplace kernel the estimate targets `I_Stein - (2/σ)∫ρ²`.
pub fn stein_fisher_points<T: Real>(
    points: &[T],
    dim: usize,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    stat: Statistic,
) -> Result<SteinFisherEstimate<T>> {
    if dim == 0 || !points.len().is_multiple_of(dim) || t.dim() != dim {
        return Err(Error::invalid("points, target and dimension disagree"));
    }
    let n = points.len() / dim;
    if n < 2 {
        return Err(Error::invalid("Stein-Fisher estimate needs at least two points"));
    }
    if stat == Statistic::V && !k.is_smooth() {
        return Err(Error::UnsupportedKernel(
            "V-statistic needs a kernel that is smooth on the diagonal".into(),
        ));
    }
    let mut grads = vec![T::zero(); points.len()];
    for (x, g) in points.chunks(dim).zip(grads.chunks_mut(dim)) {
        t.potential_and_grad(x, g);
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let grow = |i: usize| &grads[i * dim..(i + 1) * dim];
    let mut t1 = vec![T::zero(); dim];
    let mut t2 = vec![T::zero(); dim];

    let mut row_sums = vec![T::zero(); n];
    let mut off_sum = T::zero();
    let mut off_sq = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = stein_kernel(k, row(i), row(j), grow(i), grow(j), &mut t1, &mut t2)?;
            row_sums[i] = row_sums[i] + v;
            row_sums[j] = row_sums[j] + v;
            off_sum = off_sum + v;
            off_sq = off_sq + v * v;
        }
    }
    let nf = T::count(n);
    let pairs = nf * (nf - T::one()) * T::lit(0.5);
    let u = off_sum / pairs;

    // Variance components of the U-statistic.
    let h1: Vec<T> = row_sums.iter().map(|&s| s / (nf - T::one())).collect();
    let zeta1 = h1.iter().map(|&h| (h - u) * (h - u)).sum::<T>() / nf;
    let zeta2 = (off_sq / pairs - u * u).max(T::zero());
    let var = T::lit(4.0) * zeta1 / nf + T::lit(2.0) * zeta2 / (nf * (nf - T::one()));
    let std_error = var.max(T::zero()).sqrt();

    let value = match stat {
        Statistic::U => u,
        Statistic::V => {
            let mut diag = T::zero();
            for i in 0..n {
                diag = diag + stein_kernel(k, row(i), row(i), grow(i), grow(i), &mut t1, &mut t2)?;
            }
            (T::lit(2.0) * off_sum + diag) / (nf * nf)
        }
    };
    Ok(SteinFisherEstimate { value, std_error })
}

/// U-statistic Stein-Fisher estimate for the current ensemble.
pub fn stein_fisher<T: Real>(
    e: &ParticleEnsemble<T>,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
) -> Result<SteinFisherEstimate<T>> {
    stein_fisher_points(e.positions(), e.dim(), k, t, Statistic::U)
}
