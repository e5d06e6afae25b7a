//! Positive-definite kernels, their derivatives, Gram matrices and the median
//! bandwidth heuristic.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{sqrt_psd, Matrix};
use crate::scalar::{sign0, Real};
use crate::targets::TargetModel;

/// Scalar kernel on `R^d`.
///
/// `PExponential` is `exp(-(|x-y|/σ)^p)`; `p = 2` is the Gaussian kernel and
/// `p = 1` the Laplace kernel. `WeightedMatern1D` is
/// `π(x)^{-1/2} exp(-|x-y|) π(y)^{-1/2}`. `Polynomial1D` is `xy` or `xy + 1`.
#[derive(Clone, Debug)]
pub enum KernelSpec<T> {
    PExponential { p: T, sigma: T },
    WeightedMatern1D(Arc<TargetModel<T>>),
    Polynomial1D { offset: bool },
    WeightedSum(Vec<(T, KernelSpec<T>)>),
}

impl<T: Real> KernelSpec<T> {
    pub fn p_exponential(p: T, sigma: T) -> Result<Self> {
        if !(p > T::zero() && p <= T::lit(2.0)) {
            return Err(Error::invalid(format!("kernel exponent p={p} outside (0, 2]")));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::invalid(format!(
                "kernel bandwidth sigma={sigma} must be positive"
            )));
        }
        Ok(Self::PExponential { p, sigma })
    }

    /// `exp(-|x-y|^2 / σ^2)`
    pub fn gaussian(sigma: T) -> Result<Self> {
        Self::p_exponential(T::lit(2.0), sigma)
    }

    /// `exp(-|x-y| / σ)`
    pub fn laplace(sigma: T) -> Result<Self> {
        Self::p_exponential(T::one(), sigma)
    }

    pub fn weighted_matern(target: Arc<TargetModel<T>>) -> Result<Self> {
        if target.dim() != 1 {
            return Err(Error::invalid("weighted Matérn kernel is one-dimensional"));
        }
        Ok(Self::WeightedMatern1D(target))
    }

    pub fn polynomial(offset: bool) -> Self {
        Self::Polynomial1D { offset }
    }

    pub fn weighted_sum(terms: Vec<(T, KernelSpec<T>)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("kernel sum needs at least one term"));
        }
        if terms.iter().any(|(w, _)| !(*w > T::zero()) || !w.is_finite()) {
            return Err(Error::invalid("kernel sum weights must be positive"));
        }
        Ok(Self::WeightedSum(terms))
    }

    /// Dimension the kernel is restricted to, if any.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            Self::PExponential { .. } => None,
            Self::WeightedMatern1D(_) | Self::Polynomial1D { .. } => Some(1),
            Self::WeightedSum(terms) => terms.iter().find_map(|(_, k)| k.required_dim()),
        }
    }

    pub fn is_translation_invariant(&self) -> bool {
        match self {
            Self::PExponential { .. } => true,
            Self::WeightedMatern1D(_) | Self::Polynomial1D { .. } => false,
            Self::WeightedSum(terms) => terms.iter().all(|(_, k)| k.is_translation_invariant()),
        }
    }

    /// True if the kernel is twice differentiable on the diagonal.
    pub fn is_smooth(&self) -> bool {
        match self {
            Self::PExponential { p, .. } => *p == T::lit(2.0),
            Self::WeightedMatern1D(_) => false,
            Self::Polynomial1D { .. } => true,
            Self::WeightedSum(terms) => terms.iter().all(|(_, k)| k.is_smooth()),
        }
    }

    fn check_args(&self, x: &[T], y: &[T]) -> Result<()> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::invalid(format!(
                "kernel arguments have dimensions {} and {}",
                x.len(),
                y.len()
            )));
        }
        if let Some(d) = self.required_dim() {
            if x.len() != d {
                return Err(Error::invalid(format!(
                    "kernel needs {d}-dimensional points, got {}",
                    x.len()
                )));
            }
        }
        if !x.iter().chain(y).all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite kernel argument"));
        }
        Ok(())
    }

    /// `k(x, y)` with argument validation.
    pub fn eval(&self, x: &[T], y: &[T]) -> Result<T> {
        self.check_args(x, y)?;
        Ok(self.value(x, y))
    }

    /// `∇₁k(x, y)` with argument validation.
    pub fn grad1(&self, x: &[T], y: &[T]) -> Result<Vec<T>> {
        self.check_args(x, y)?;
        let mut g = vec![T::zero(); x.len()];
        self.value_and_grad1(x, y, &mut g);
        Ok(g)
    }

    /// `k(x, y)` without validation; callers guarantee matching finite inputs.
    #[inline]
    pub fn value(&self, x: &[T], y: &[T]) -> T {
        match self {
            Self::PExponential { p, sigma } => {
                let r2 = dist2(x, y);
                pexp_from_r2(*p, *sigma, r2)
            }
            Self::WeightedMatern1D(t) => matern(t, x[0], y[0]),
            Self::Polynomial1D { offset } => poly(*offset, x[0], y[0]),
            Self::WeightedSum(terms) => terms.iter().map(|(w, k)| *w * k.value(x, y)).sum(),
        }
    }

    /// Writes `∇₁k(x, y)` into `grad` and returns `k(x, y)`.
    ///
    /// At `x = y` the gradient of a non-differentiable profile is set to zero.
    #[inline]
    pub fn value_and_grad1(&self, x: &[T], y: &[T], grad: &mut [T]) -> T {
        match self {
            Self::PExponential { p, sigma } => {
                let r2 = dist2(x, y);
                let k = pexp_from_r2(*p, *sigma, r2);
                let g = if r2 == T::zero() {
                    T::zero()
                } else {
                    k * pexp_radial_factor(*p, *sigma, r2)
                };
                for ((o, &a), &b) in grad.iter_mut().zip(x).zip(y) {
                    *o = g * (a - b);
                }
                k
            }
            Self::WeightedMatern1D(t) => {
                let (k, d1) = matern_d1(t, x[0], y[0]);
                grad[0] = d1;
                k
            }
            Self::Polynomial1D { offset } => {
                grad[0] = y[0];
                poly(*offset, x[0], y[0])
            }
            Self::WeightedSum(terms) => {
                let mut tmp = vec![T::zero(); grad.len()];
                grad.iter_mut().for_each(|g| *g = T::zero());
                let mut k = T::zero();
                for (w, term) in terms {
                    k = k + *w * term.value_and_grad1(x, y, &mut tmp);
                    for (g, &t) in grad.iter_mut().zip(&tmp) {
                        *g = *g + *w * t;
                    }
                }
                k
            }
        }
    }

    /// Trace of the mixed Hessian `Σ_i ∂_{x_i} ∂_{y_i} k(x, y)`.
    ///
    /// Defined off the diagonal for every variant; on the diagonal only for
    /// kernels that are smooth there.
    pub fn mixed_trace(&self, x: &[T], y: &[T]) -> Result<T> {
        match self {
            Self::PExponential { p, sigma } => {
                let d = T::count(x.len());
                let r2 = dist2(x, y);
                if r2 == T::zero() {
                    if *p == T::lit(2.0) {
                        return Ok(T::lit(2.0) * d / (*sigma * *sigma));
                    }
                    return Err(Error::UnsupportedKernel(format!(
                        "mixed derivative of the p={p} kernel is undefined on the diagonal"
                    )));
                }
                let k = pexp_from_r2(*p, *sigma, r2);
                let g = pexp_radial_factor(*p, *sigma, r2);
                Ok(k * (-g * g * r2 - (*p - T::lit(2.0) + d) * g))
            }
            Self::WeightedMatern1D(t) => {
                let (a, b) = (x[0], y[0]);
                if a == b {
                    return Err(Error::UnsupportedKernel(
                        "mixed derivative of the weighted Matérn kernel is undefined on the diagonal".into(),
                    ));
                }
                let s = sign0(a - b);
                let k = matern(t, a, b);
                let (_, va, _) = t.potential_derivs_1d(a);
                let (_, vb, _) = t.potential_derivs_1d(b);
                Ok(k * (va * T::lit(0.5) - s) * (vb * T::lit(0.5) + s))
            }
            Self::Polynomial1D { .. } => Ok(T::one()),
            Self::WeightedSum(terms) => {
                let mut acc = T::zero();
                for (w, k) in terms {
                    acc = acc + *w * k.mixed_trace(x, y)?;
                }
                Ok(acc)
            }
        }
    }

    /// Coefficient `c(y)` of the point mass `c(y) δ(x - y)` in the distributional
    /// mixed derivative `∂_x ∂_y k(x, y)` of a 1D kernel.
    ///
    /// Zero for kernels with a continuous first derivative; `2/σ` for the
    /// Laplace kernel and `2 k(y, y)` for the weighted Matérn kernel. Exponents
    /// `p < 1` produce a non-integrable singularity and are rejected.
    pub fn diagonal_jump_1d(&self, y: T) -> Result<T> {
        match self {
            Self::PExponential { p, sigma } => {
                if *p == T::one() {
                    Ok(T::lit(2.0) / *sigma)
                } else if *p > T::one() {
                    Ok(T::zero())
                } else {
                    Err(Error::UnsupportedKernel(format!(
                        "mixed derivative of the p={p} kernel is not integrable"
                    )))
                }
            }
            Self::WeightedMatern1D(t) => Ok(T::lit(2.0) * matern(t, y, y)),
            Self::Polynomial1D { .. } => Ok(T::zero()),
            Self::WeightedSum(terms) => {
                let mut acc = T::zero();
                for (w, k) in terms {
                    acc = acc + *w * k.diagonal_jump_1d(y)?;
                }
                Ok(acc)
            }
        }
    }

    /// `∂₁k(x, y)` for scalar arguments.
    #[inline]
    pub fn d1_1d(&self, x: T, y: T) -> T {
        let mut g = [T::zero()];
        self.value_and_grad1(&[x], &[y], &mut g);
        g[0]
    }

    /// Positive semi-definite sum `k + ε k₀`, useful to regularize polynomial kernels.
    pub fn plus(self, eps: T, other: KernelSpec<T>) -> Result<Self> {
        Self::weighted_sum(vec![(T::one(), self), (eps, other)])
    }
}

#[inline]
fn dist2<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .fold(T::zero(), |s, v| s + v)
}

#[inline]
fn pexp_from_r2<T: Real>(p: T, sigma: T, r2: T) -> T {
    if p == T::lit(2.0) {
        (-r2 / (sigma * sigma)).exp()
    } else if p == T::one() {
        (-r2.sqrt() / sigma).exp()
    } else {
        (-(r2.sqrt() / sigma).powf(p)).exp()
    }
}

/// `g(r) = -p (r/σ)^p / r^2`, so that `∇₁k = k g (x - y)`.
#[inline]
fn pexp_radial_factor<T: Real>(p: T, sigma: T, r2: T) -> T {
    if p == T::lit(2.0) {
        -T::lit(2.0) / (sigma * sigma)
    } else if p == T::one() {
        -T::one() / (sigma * r2.sqrt())
    } else {
        -p * (r2.sqrt() / sigma).powf(p) / r2
    }
}

#[inline]
fn poly<T: Real>(offset: bool, x: T, y: T) -> T {
    if offset {
        x * y + T::one()
    } else {
        x * y
    }
}

#[inline]
fn matern<T: Real>(t: &TargetModel<T>, x: T, y: T) -> T {
    let vx = t.potential(&[x]);
    let vy = t.potential(&[y]);
    (-(x - y).abs() + T::lit(0.5) * (vx + vy)).exp()
}

/// Weighted Matérn value and `∂₁k = k (V'(x)/2 - sign(x - y))`.
#[inline]
fn matern_d1<T: Real>(t: &TargetModel<T>, x: T, y: T) -> (T, T) {
    let mut g = [T::zero()];
    let vx = t.potential_and_grad(&[x], &mut g);
    let vy = t.potential(&[y]);
    let k = (-(x - y).abs() + T::lit(0.5) * (vx + vy)).exp();
    (k, k * (T::lit(0.5) * g[0] - sign0(x - y)))
}

/// Median-heuristic bandwidth `σ = med / log(max(n, 2))^{1/p}` over all pairwise
/// Euclidean distances of `points` (row-major, `dim` columns).
///
/// With an even number of pairs the median is the mean of the two middle
/// order statistics.
pub fn median_bandwidth<T: Real>(points: &[T], dim: usize, p: T, n: usize) -> Result<T> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::invalid("point buffer is not a whole number of rows"));
    }
    let m = points.len() / dim;
    if m < 2 {
        return Err(Error::Degenerate("median heuristic needs at least two points".into()));
    }
    if !(p > T::zero()) {
        return Err(Error::invalid("median heuristic needs p > 0"));
    }
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        let xi = &points[i * dim..(i + 1) * dim];
        for j in (i + 1)..m {
            dists.push(dist2(xi, &points[j * dim..(j + 1) * dim]).sqrt());
        }
    }
    let med = median(&mut dists);
    if !(med > T::zero()) {
        return Err(Error::Degenerate(
            "median pairwise distance is zero (points coincide)".into(),
        ));
    }
    let log_n = T::count(n.max(2)).ln();
    Ok(med / log_n.powf(T::one() / p))
}

fn median<T: Real>(values: &mut [T]) -> T {
    let len = values.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite distances");
    let mid = len / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, cmp);
    if len % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(T::neg_infinity(), T::max);
        (lower + upper) * T::lit(0.5)
    }
}

/// `G_ij = scale · k(x_i, x_j)` for row-major `points` with `dim` columns.
pub fn gram<T: Real>(k: &KernelSpec<T>, points: &[T], dim: usize, scale: T) -> Result<Matrix<T>> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::invalid("point buffer is not a whole number of rows"));
    }
    if let Some(d) = k.required_dim() {
        if d != dim {
            return Err(Error::invalid(format!("kernel needs dimension {d}, got {dim}")));
        }
    }
    if !(scale > T::zero()) {
        return Err(Error::invalid("Gram scale must be positive"));
    }
    let n = points.len() / dim;
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        let xi = &points[i * dim..(i + 1) * dim];
        for j in i..n {
            let v = scale * k.value(xi, &points[j * dim..(j + 1) * dim]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Symmetric PSD square root of a Gram matrix via cyclic Jacobi; eigenvalues in
/// `[-1e-10, 0)` are clamped to zero.
pub fn gram_sqrt<T: Real>(g: &Matrix<T>) -> Result<Matrix<T>> {
    sqrt_psd(g)
}
