use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::scalar::Real;
use crate::targets::TargetModel;

/// Below this many particles the pairwise sums run on the calling thread.
const PARALLEL_THRESHOLD: usize = 64;

/// `N` particles in `d` dimensions with simulation clock, cost counters and
/// the random stream used by stochastic dynamics.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble<T> {
    positions: Vec<T>,
    n: usize,
    dim: usize,
    pub time: T,
    grad_evals: u64,
    pair_evals: u64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Real> ParticleEnsemble<T> {
    /// Builds an ensemble from row-major positions (`n * dim` values).
    pub fn new(positions: Vec<T>, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("ensemble dimension must be at least 1"));
        }
        if positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} coordinates do not form a nonempty set of {dim}-dimensional particles",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "particle {} has a non-finite coordinate",
                i / dim
            )));
        }
        Ok(Self {
            n: positions.len() / dim,
            positions,
            dim,
            time: T::zero(),
            grad_evals: 0,
            pair_evals: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `n` i.i.d. draws from `law`, using the ensemble's own stream seeded by `seed`.
    pub fn from_law(law: &TargetModel<T>, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ensemble needs at least one particle"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = law.sample_flat(n, &mut rng);
        let mut e = Self::new(positions, law.dim(), seed)?;
        e.rng = rng;
        Ok(e)
    }

    pub fn standard_normal(n: usize, dim: usize, seed: u64) -> Result<Self> {
        Self::from_law(&TargetModel::standard_normal(dim)?, n, seed)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[T] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Replaces all positions; the buffer length must not change.
    pub fn set_positions(&mut self, positions: &[T]) -> Result<()> {
        if positions.len() != self.positions.len() {
            return Err(Error::invalid("position buffer changes ensemble size"));
        }
        self.positions.copy_from_slice(positions);
        Ok(())
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [T] {
        &mut self.positions
    }

    pub fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    pub fn pair_evals(&self) -> u64 {
        self.pair_evals
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub(crate) fn count_rhs(&mut self) {
        self.grad_evals += self.n as u64;
        self.pair_evals += (self.n * self.n) as u64;
    }

    pub(crate) fn set_counters(&mut self, grad_evals: u64, pair_evals: u64) {
        self.grad_evals = grad_evals;
        self.pair_evals = pair_evals;
    }

    pub(crate) fn count_gradients(&mut self) {
        self.grad_evals += self.n as u64;
    }

    /// Coordinate `c` of every particle, e.g. the 1D sample for W1.
    pub fn coordinate(&self, c: usize) -> Vec<T> {
        self.positions.iter().skip(c).step_by(self.dim).copied().collect()
    }

    /// Smallest pairwise Euclidean distance (infinite for a single particle).
    pub fn min_pairwise_distance(&self) -> T {
        let mut best = T::infinity();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d2 = self
                    .particle(i)
                    .iter()
                    .zip(self.particle(j))
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .fold(T::zero(), |s, v| s + v);
                best = best.min(d2.sqrt());
            }
        }
        best
    }
}

fn check_compat<T: Real>(positions: &[T], dim: usize, k: &KernelSpec<T>, t: &TargetModel<T>) -> Result<()> {
    if t.dim() != dim {
        return Err(Error::invalid(format!(
            "target has dimension {} but particles have dimension {dim}",
            t.dim()
        )));
    }
    if let Some(d) = k.required_dim() {
        if d != dim {
            return Err(Error::invalid(format!("kernel needs dimension {d}, got {dim}")));
        }
    }
    debug_assert_eq!(positions.len() % dim, 0);
    Ok(())
}

/// `∇V` at every particle, row-major.
pub(crate) fn potential_gradients<T: Real>(positions: &[T], dim: usize, t: &TargetModel<T>) -> Vec<T> {
    let mut grads = vec![T::zero(); positions.len()];
    for (x, g) in positions.chunks(dim).zip(grads.chunks_mut(dim)) {
        t.potential_and_grad(x, g);
    }
    grads
}

/// Pure SVGD velocity `v_i = -(1/N) Σ_j [∇₁k(x_i,x_j) + k(x_i,x_j) ∇V(x_j)]`.
///
/// Each inner sum runs over `j` in index order whatever the thread count, so
/// results do not depend on the rayon pool size.
pub fn svgd_velocity_field<T: Real>(
    positions: &[T],
    dim: usize,
    k: &KernelSpec<T>,
    t: &TargetModel<T>,
    out: &mut [T],
) -> Result<()> {
    check_compat(positions, dim, k, t)?;
    let n = positions.len() / dim;
    let grads = potential_gradients(positions, dim, t);
    let inv_n = T::one() / T::count(n);
    let row = |i: usize, v: &mut [T]| {
        let xi = &positions[i * dim..(i + 1) * dim];
        let mut gk = vec![T::zero(); dim];
        v.iter_mut().for_each(|c| *c = T::zero());
        for j in 0..n {
            let xj = &positions[j * dim..(j + 1) * dim];
            let kij = k.value_and_grad1(xi, xj, &mut gk);
            let gj = &grads[j * dim..(j + 1) * dim];
            for c in 0..dim {
                v[c] = v[c] + gk[c] + kij * gj[c];
            }
        }
        v.iter_mut().for_each(|c| *c = -*c * inv_n);
    };
    if n >= PARALLEL_THRESHOLD {
        out.par_chunks_mut(dim).enumerate().for_each(|(i, v)| row(i, v));
    } else {
        out.chunks_mut(dim).enumerate().for_each(|(i, v)| row(i, v));
    }
    check_finite(out, dim, "SVGD velocity")
}

pub(crate) fn check_finite<T: Real>(values: &[T], dim: usize, what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Blowup {
            index: i / dim,
            detail: format!("{what} is not finite"),
        }),
    }
}

/// SVGD velocity of the ensemble; counts `N` gradient and `N²` pair evaluations.
pub fn svgd_velocity<T: Real>(e: &mut ParticleEnsemble<T>, k: &KernelSpec<T>, t: &TargetModel<T>) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); e.positions.len()];
    svgd_velocity_field(&e.positions, e.dim, k, t, &mut out)?;
    e.count_rhs();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal() -> TargetModel<f64> {
        TargetModel::standard_normal(1).unwrap()
    }

    #[test]
    fn single_particle_is_gradient_descent() {
        let t = TargetModel::normal_1d(1.0, 0.5).unwrap();
        let k = KernelSpec::laplace(0.3).unwrap();
        let mut e = ParticleEnsemble::new(vec![2.0], 1, 0).unwrap();
        let v = svgd_velocity(&mut e, &k, &t).unwrap();
        assert_eq!(v, vec![-t.grad_potential(&[2.0])[0]]);
        assert_eq!(e.grad_evals(), 1);
        assert_eq!(e.pair_evals(), 1);
    }

    #[test]
    fn two_particle_hand_value() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut e = ParticleEnsemble::new(vec![0.0, 1.0], 1, 0).unwrap();
        let v = svgd_velocity(&mut e, &k, &std_normal()).unwrap();
        let em1 = (-1.0f64).exp();
        // j=0: ∇₁k(0,0)=0, k·∇V(0)=0; j=1: ∇₁k(0,1)=2e^{-1}, k·∇V(1)=e^{-1}.
        let expected = -0.5 * (2.0 * em1 + 0.0 + em1);
        assert!((v[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn symmetric_configuration_gives_antisymmetric_velocity() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut e = ParticleEnsemble::new(vec![-0.7, 0.7], 1, 0).unwrap();
        let v = svgd_velocity(&mut e, &k, &std_normal()).unwrap();
        // Summation order differs between the two particles, hence round-off.
        assert!((v[0] + v[1]).abs() < 1e-15);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let mut e = ParticleEnsemble::new(vec![0.0, 1.0], 2, 0).unwrap();
        assert!(matches!(
            svgd_velocity(&mut e, &k, &std_normal()),
            Err(Error::InvalidInput(_))
        ));
    }
}
