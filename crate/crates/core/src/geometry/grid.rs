use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::targets::TargetModel;

/// Uniform grid on `[lo, hi]` with trapezoidal weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid1D<T> {
    lo: T,
    hi: T,
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> Grid1D<T> {
    pub fn new(lo: T, hi: T, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("a grid needs at least three nodes"));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("grid interval [{lo}, {hi}] is empty")));
        }
        let h = (hi - lo) / T::count(n - 1);
        let mut nodes: Vec<T> = (0..n).map(|i| lo + T::count(i) * h).collect();
        nodes[n - 1] = hi;
        let mut weights = vec![h; n];
        weights[0] = h * T::lit(0.5);
        weights[n - 1] = h * T::lit(0.5);
        Ok(Self { lo, hi, nodes, weights })
    }

    /// Grid over the default truncation interval of a 1D target.
    pub fn for_target(t: &TargetModel<T>, n: usize) -> Result<Self> {
        if t.dim() != 1 {
            return Err(Error::invalid("1D grids need a one-dimensional target"));
        }
        let (lo, hi) = t.truncation_domain();
        Self::new(lo, hi, n)
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> T {
        (self.hi - self.lo) / T::count(self.nodes.len() - 1)
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Trapezoidal quadrature of nodal values.
    pub fn integrate(&self, values: &[T]) -> T {
        debug_assert_eq!(values.len(), self.nodes.len());
        self.weights.iter().zip(values).map(|(&w, &v)| w * v).sum()
    }

    /// Index of the node closest to `x` (clamped to the grid).
    pub fn nearest(&self, x: T) -> usize {
        let i = ((x - self.lo) / self.spacing()).round();
        i.max(T::zero()).to_usize().unwrap_or(0).min(self.nodes.len() - 1)
    }

    /// Second-order finite-difference derivative (central inside, one-sided
    /// three-point stencils at the ends).
    pub fn derivative(&self, values: &[T]) -> Vec<T> {
        let n = values.len();
        debug_assert_eq!(n, self.nodes.len());
        let h2 = T::lit(2.0) * self.spacing();
        let mut d = vec![T::zero(); n];
        for i in 1..n - 1 {
            d[i] = (values[i + 1] - values[i - 1]) / h2;
        }
        let (three, four) = (T::lit(3.0), T::lit(4.0));
        d[0] = (-three * values[0] + four * values[1] - values[2]) / h2;
        d[n - 1] = (three * values[n - 1] - four * values[n - 2] + values[n - 3]) / h2;
        d
    }

    pub(crate) fn check_same(&self, other: &Grid1D<T>) -> Result<()> {
        if self.nodes.len() == other.nodes.len() && self.lo == other.lo && self.hi == other.hi {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Nonnegative density sampled at the nodes of a grid.
#[derive(Clone, Debug)]
pub struct DensityField1D<T> {
    grid: Grid1D<T>,
    values: Vec<T>,
}

impl<T: Real> DensityField1D<T> {
    /// Wraps nodal values without normalizing them.
    pub fn new(grid: Grid1D<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(Error::invalid(format!(
                "density value {} at node {i} is negative or not finite",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the nodes and normalizes to unit quadrature mass.
    pub fn from_fn(grid: Grid1D<T>, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)?.normalized()
    }

    /// Grid restriction of the target density, normalized.
    pub fn from_target(grid: Grid1D<T>, t: &TargetModel<T>) -> Result<Self> {
        Self::from_fn(grid, |x| t.density(&[x]))
    }

    pub fn normalized(mut self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > T::zero()) {
            return Err(Error::Degenerate("density has zero mass on the grid".into()));
        }
        self.values.iter_mut().for_each(|v| *v = *v / mass);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn mass(&self) -> T {
        self.grid.integrate(&self.values)
    }

    pub fn derivative(&self) -> Vec<T> {
        self.grid.derivative(&self.values)
    }

    /// First and second moments `(∫xρ, ∫x²ρ)`.
    pub fn moments(&self) -> (T, T) {
        let x = self.grid.nodes();
        let m1 = self
            .grid
            .integrate(&x.iter().zip(&self.values).map(|(&a, &r)| a * r).collect::<Vec<_>>());
        let m2 = self
            .grid
            .integrate(&x.iter().zip(&self.values).map(|(&a, &r)| a * a * r).collect::<Vec<_>>());
        (m1, m2)
    }
}

/// Real-valued field on a grid (potentials, test functions, velocities).
#[derive(Clone, Debug)]
pub struct ScalarField1D<T> {
    grid: Grid1D<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField1D<T> {
    pub fn new(grid: Grid1D<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scalar field has non-finite values"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D<T>, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: Grid1D<T>) -> Self {
        let values = vec![T::zero(); grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn derivative(&self) -> Vec<T> {
        self.grid.derivative(&self.values)
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| c * v).collect(),
        }
    }
}
