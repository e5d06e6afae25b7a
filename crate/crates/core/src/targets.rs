//! Target distributions `π ∝ exp(-V)` built from Gaussian components.
//!
//! Densities are stored normalized, so `V = -log π` carries no free additive
//! constant and KL or Stein-Fisher values come out absolute.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_substitute, Matrix};
use crate::scalar::{log_sum_exp, Real};

#[derive(Clone, Debug)]
struct Component<T> {
    weight: T,
    log_weight: T,
    mean: Vec<T>,
    cov: Matrix<T>,
    chol: Matrix<T>,
    precision: Matrix<T>,
    /// `-(d/2) log 2π - (1/2) log det Σ`
    log_norm: T,
}

impl<T: Real> Component<T> {
    fn new(weight: T, mean: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        let d = mean.len();
        if cov.rows() != d || cov.cols() != d {
            return Err(Error::invalid(format!(
                "covariance is {}x{} but mean has dimension {d}",
                cov.rows(),
                cov.cols()
            )));
        }
        if !cov.is_symmetric(T::lit(1e-12)) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let chol = cholesky(&cov).map_err(|_| Error::invalid("covariance is not positive definite"))?;
        let log_det = (0..d).map(|i| chol[(i, i)].ln()).sum::<T>() * T::lit(2.0);
        let mut precision = Matrix::zeros(d, d);
        let mut col = vec![T::zero(); d];
        // Σ^{-1} = L^{-T} L^{-1}; build L^{-1} column by column first.
        let mut linv = Matrix::zeros(d, d);
        for j in 0..d {
            col.iter_mut().for_each(|c| *c = T::zero());
            col[j] = T::one();
            forward_substitute(&chol, &mut col);
            for i in 0..d {
                linv[(i, j)] = col[i];
            }
        }
        for i in 0..d {
            for j in 0..d {
                precision[(i, j)] = (0..d).map(|k| linv[(k, i)] * linv[(k, j)]).sum();
            }
        }
        precision.symmetrize();
        let log_norm = -T::lit(0.5) * (T::count(d) * (T::TAU()).ln() + log_det);
        Ok(Self {
            weight,
            log_weight: weight.ln(),
            mean,
            cov,
            chol,
            precision,
            log_norm,
        })
    }

    /// Writes `P (x - μ)` into `g` and returns the log density of the component.
    fn log_density_and_score(&self, x: &[T], g: &mut [T]) -> T {
        let d = self.mean.len();
        let mut quad = T::zero();
        for i in 0..d {
            let row = self.precision.row(i);
            let mut s = T::zero();
            for j in 0..d {
                s = s + row[j] * (x[j] - self.mean[j]);
            }
            g[i] = s;
            quad = quad + s * (x[i] - self.mean[i]);
        }
        self.log_norm - T::lit(0.5) * quad
    }
}

/// Gaussian or Gaussian-mixture target with closed-form normalization.
#[derive(Clone, Debug)]
pub struct TargetModel<T> {
    dim: usize,
    components: Vec<Component<T>>,
}

impl<T: Real> TargetModel<T> {
    pub fn gaussian(mean: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        Self::mixture(vec![T::one()], vec![mean], vec![cov])
    }

    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::gaussian(vec![T::zero(); dim], Matrix::identity(dim))
    }

    /// One-dimensional Gaussian `N(mean, std^2)`.
    pub fn normal_1d(mean: T, std: T) -> Result<Self> {
        Self::gaussian(vec![mean], Matrix::from_diagonal(&[std * std]))
    }

    /// Mixture `Σ_c w_c N(μ_c, Σ_c)`; weights must be positive and sum to one.
    pub fn mixture(weights: Vec<T>, means: Vec<Vec<T>>, covs: Vec<Matrix<T>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if weights.len() != means.len() || weights.len() != covs.len() {
            return Err(Error::invalid(format!(
                "mixture has {} weights, {} means and {} covariances",
                weights.len(),
                means.len(),
                covs.len()
            )));
        }
        if weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(16.0)) {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::invalid("target dimension must be at least 1"));
        }
        let mut components = Vec::with_capacity(weights.len());
        for ((w, m), c) in weights.into_iter().zip(means).zip(covs) {
            if m.len() != dim {
                return Err(Error::invalid("mixture components differ in dimension"));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite component mean"));
            }
            components.push(Component::new(w, m, c)?);
        }
        Ok(Self { dim, components })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> Vec<T> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn means(&self) -> Vec<Vec<T>> {
        self.components.iter().map(|c| c.mean.clone()).collect()
    }

    pub fn covariances(&self) -> Vec<Matrix<T>> {
        self.components.iter().map(|c| c.cov.clone()).collect()
    }

    /// Evaluates `V(x)` and writes `∇V(x)` into `grad`.
    ///
    /// Responsibilities are computed with a max-shifted log-sum-exp so the
    /// result stays finite far out in the tails.
    pub fn potential_and_grad(&self, x: &[T], grad: &mut [T]) -> T {
        debug_assert_eq!(x.len(), self.dim);
        if self.components.len() == 1 {
            let lp = self.components[0].log_density_and_score(x, grad);
            return -lp;
        }
        let d = self.dim;
        let mut scores = vec![T::zero(); d * self.components.len()];
        let mut logs = Vec::with_capacity(self.components.len());
        for (c, comp) in self.components.iter().enumerate() {
            let lp = comp.log_density_and_score(x, &mut scores[c * d..(c + 1) * d]);
            logs.push(comp.log_weight + lp);
        }
        let lse = log_sum_exp(&logs);
        grad.iter_mut().for_each(|g| *g = T::zero());
        for (c, &l) in logs.iter().enumerate() {
            let r = (l - lse).exp();
            for i in 0..d {
                grad[i] = grad[i] + r * scores[c * d + i];
            }
        }
        -lse
    }

    pub fn potential(&self, x: &[T]) -> T {
        let mut g = vec![T::zero(); self.dim];
        self.potential_and_grad(x, &mut g)
    }

    pub fn grad_potential(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim];
        self.potential_and_grad(x, &mut g);
        g
    }

    /// Normalized density `π(x) = exp(-V(x))`.
    pub fn density(&self, x: &[T]) -> T {
        (-self.potential(x)).exp()
    }

    /// Hessian of `V`: `Σ r_c P_c - Σ r_c g_c g_c^T + ḡ ḡ^T` with `g_c = P_c (x - μ_c)`.
    pub fn hessian_potential(&self, x: &[T]) -> Matrix<T> {
        let d = self.dim;
        let n = self.components.len();
        let mut scores = vec![T::zero(); d * n];
        let mut logs = Vec::with_capacity(n);
        for (c, comp) in self.components.iter().enumerate() {
            let lp = comp.log_density_and_score(x, &mut scores[c * d..(c + 1) * d]);
            logs.push(comp.log_weight + lp);
        }
        let lse = log_sum_exp(&logs);
        let resp: Vec<T> = logs.iter().map(|&l| (l - lse).exp()).collect();
        let mut mean_score = vec![T::zero(); d];
        for (c, &r) in resp.iter().enumerate() {
            for i in 0..d {
                mean_score[i] = mean_score[i] + r * scores[c * d + i];
            }
        }
        let mut h = Matrix::zeros(d, d);
        for (c, comp) in self.components.iter().enumerate() {
            let r = resp[c];
            let g = &scores[c * d..(c + 1) * d];
            for i in 0..d {
                for j in 0..d {
                    h[(i, j)] = h[(i, j)] + r * (comp.precision[(i, j)] - g[i] * g[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] = h[(i, j)] + mean_score[i] * mean_score[j];
            }
        }
        h
    }

    /// `V`, `V'` and `V''` of a one-dimensional target at `x`.
    pub fn potential_derivs_1d(&self, x: T) -> (T, T, T) {
        debug_assert_eq!(self.dim, 1);
        let mut g = [T::zero()];
        let v = self.potential_and_grad(&[x], &mut g);
        let h = if self.components.len() == 1 {
            self.components[0].precision[(0, 0)]
        } else {
            self.hessian_potential(&[x])[(0, 0)]
        };
        (v, g[0], h)
    }

    /// Draws `n` i.i.d. points, returned row-major as an `n * dim` vector.
    pub fn sample_flat<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<T> {
        let d = self.dim;
        let mut out = Vec::with_capacity(n * d);
        let mut cumulative = Vec::with_capacity(self.components.len());
        let mut acc = T::zero();
        for c in &self.components {
            acc = acc + c.weight;
            cumulative.push(acc);
        }
        let mut z = vec![T::zero(); d];
        for _ in 0..n {
            let c = if self.components.len() == 1 {
                0
            } else {
                let u = T::unit_uniform(rng) * acc;
                cumulative
                    .iter()
                    .position(|&cw| u < cw)
                    .unwrap_or(self.components.len() - 1)
            };
            let comp = &self.components[c];
            for zi in z.iter_mut() {
                *zi = T::standard_normal(rng);
            }
            for i in 0..d {
                let row = comp.chol.row(i);
                let mut s = comp.mean[i];
                for j in 0..=i {
                    s = s + row[j] * z[j];
                }
                out.push(s);
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<T>> {
        self.sample_flat(n, rng).chunks(self.dim).map(<[T]>::to_vec).collect()
    }

    /// Default 1D truncation interval `[min μ - 10 max std, max μ + 10 max std]`.
    pub fn truncation_domain(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let mut max_std = T::zero();
        for c in &self.components {
            for i in 0..self.dim {
                lo = lo.min(c.mean[i]);
                hi = hi.max(c.mean[i]);
                max_std = max_std.max(c.cov[(i, i)].sqrt());
            }
        }
        let pad = T::lit(10.0) * max_std;
        (lo - pad, hi + pad)
    }

    /// Overall mean of the target.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim];
        for c in &self.components {
            for (acc, &mu) in m.iter_mut().zip(&c.mean) {
                *acc = *acc + c.weight * mu;
            }
        }
        m
    }
}

/// The two benchmark mixtures: a four-mode 1D target and a six-mode 2D target.
pub fn paper_targets<T: Real>() -> (TargetModel<T>, TargetModel<T>) {
    let quarter = T::lit(0.25);
    let one_d = TargetModel::mixture(
        vec![quarter; 4],
        [2.0, -2.0, 6.0, -6.0].iter().map(|&m| vec![T::lit(m)]).collect(),
        vec![Matrix::identity(1); 4],
    )
    .expect("1D benchmark mixture is valid");

    let means = [
        (-5.0, -1.0),
        (-5.0, 1.0),
        (5.0, -1.0),
        (5.0, 1.0),
        (0.0, 1.0),
        (0.0, -1.0),
    ];
    let small = Matrix::identity(2).scale(T::lit(0.2));
    let elongated = Matrix::from_diagonal(&[T::lit(10.0), T::lit(0.5)]);
    let covs = vec![
        small.clone(),
        small.clone(),
        small.clone(),
        small,
        elongated.clone(),
        elongated,
    ];
    let sixth = T::one() / T::lit(6.0);
    let two_d = TargetModel::mixture(
        vec![sixth; 6],
        means.iter().map(|&(a, b)| vec![T::lit(a), T::lit(b)]).collect(),
        covs,
    )
    .expect("2D benchmark mixture is valid");
    (one_d, two_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_7;

    #[test]
    fn standard_normal_potential() {
        let t = TargetModel::<f64>::standard_normal(1).unwrap();
        assert!((t.potential(&[0.0]) - HALF_LOG_TAU).abs() < 1e-15);
        assert!((t.potential(&[2.0]) - (2.0 + HALF_LOG_TAU)).abs() < 1e-14);
        assert_eq!(t.grad_potential(&[1.5]), vec![1.5]);
    }

    #[test]
    fn mixture_potential_matches_direct_sum() {
        let (t, _) = paper_targets::<f64>();
        let direct: f64 = [2.0f64, -2.0, 6.0, -6.0]
            .iter()
            .map(|m| 0.25 * (-(0.0 - m).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .sum();
        assert!((t.potential(&[0.0]) + direct.ln()).abs() < 1e-12);
        assert!(t.grad_potential(&[0.0])[0].abs() < 1e-15);
    }

    #[test]
    fn mixture_gradient_matches_finite_difference() {
        let (t, _) = paper_targets::<f64>();
        let h = 1e-6;
        let fd = (t.potential(&[1.0 + h]) - t.potential(&[1.0 - h])) / (2.0 * h);
        assert!((t.grad_potential(&[1.0])[0] - fd).abs() < 1e-6);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let (_, t) = paper_targets::<f64>();
        let x = [0.7, -0.3];
        let h = t.hessian_potential(&x);
        let eps = 1e-5;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += eps;
            xm[j] -= eps;
            let gp = t.grad_potential(&xp);
            let gm = t.grad_potential(&xm);
            for i in 0..2 {
                let fd = (gp[i] - gm[i]) / (2.0 * eps);
                assert!((h[(i, j)] - fd).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn benchmark_targets_have_documented_parameters() {
        let (one, two) = paper_targets::<f64>();
        let mut means: Vec<f64> = one.means().iter().map(|m| m[0]).collect();
        means.sort_by(f64::total_cmp);
        assert_eq!(means, vec![-6.0, -2.0, 2.0, 6.0]);
        assert_eq!(one.weights(), vec![0.25; 4]);
        let covs = two.covariances();
        for c in &covs[..4] {
            assert_eq!(c, &Matrix::identity(2).scale(0.2));
        }
        for c in &covs[4..] {
            assert_eq!(c, &Matrix::from_diagonal(&[10.0, 0.5]));
        }
    }

    #[test]
    fn sampler_is_deterministic_and_centered() {
        let t = TargetModel::<f64>::standard_normal(1).unwrap();
        let a = t.sample_flat(100_000, &mut ChaCha8Rng::seed_from_u64(1));
        let b = t.sample_flat(100_000, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 4.0 / (a.len() as f64).sqrt());
    }

    #[test]
    fn mixture_component_frequencies() {
        let (t, _) = paper_targets::<f64>();
        let s = t.sample_flat(100_000, &mut ChaCha8Rng::seed_from_u64(9));
        // Components are at least 4 apart; assign each draw to its nearest mean.
        let mut counts = [0usize; 4];
        for x in &s {
            let idx = [-6.0, -2.0, 2.0, 6.0]
                .iter()
                .enumerate()
                .min_by(|a, b| (x - a.1).abs().total_cmp(&(x - b.1).abs()))
                .unwrap()
                .0;
            counts[idx] += 1;
        }
        // Misclassification by nearest mean is balanced between neighbouring modes.
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn rejects_bad_weights() {
        let r = TargetModel::<f64>::mixture(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]], vec![Matrix::identity(1); 2]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn truncation_domain_of_benchmark() {
        let (t, _) = paper_targets::<f64>();
        assert_eq!(t.truncation_domain(), (-16.0, 16.0));
    }
}
