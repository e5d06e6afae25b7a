//! Small dense linear algebra: row-major matrices, cyclic Jacobi for
//! symmetric eigenproblems, Cholesky factorization and PSD square roots.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "shape mismatch in product: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.is_square() && self.asymmetry() <= tol * (T::one() + self.frobenius_norm())
    }

    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = (self[(i, j)] + self[(j, i)]) * T::lit(0.5);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition `A = V diag(values) V^T` of a symmetric matrix.
///
/// Eigenvalues are sorted ascending; column `j` of `vectors` belongs to `values[j]`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
    pub sweeps: usize,
}

impl<T: Real> SymmetricEigen<T> {
    pub fn min_eigenvalue(&self) -> T {
        self.values.first().copied().unwrap_or_else(T::zero)
    }
}

const MAX_JACOBI_SWEEPS: usize = 64;

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Rotations are applied row by row over the strict upper triangle until the
/// off-diagonal mass falls below machine precision relative to the matrix norm.
pub fn jacobi_eigh<T: Real>(a: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    if !a.is_square() {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if !a.as_slice().iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let norm = m.frobenius_norm();
    if n <= 1 || norm == T::zero() {
        return Ok(finish_eigen(m, v, 0));
    }
    let eps = T::epsilon();
    let target = eps * norm;

    let mut sweeps = 0;
    loop {
        let off: T = {
            let mut s = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    s = s + m[(i, j)] * m[(i, j)];
                }
            }
            (s + s).sqrt()
        };
        if off <= target {
            break;
        }
        if sweeps >= MAX_JACOBI_SWEEPS {
            return Err(Error::Eigen(format!(
                "Jacobi did not converge in {MAX_JACOBI_SWEEPS} sweeps (off-diagonal norm {:e}, matrix norm {:e})",
                off.to_f64_lossy(),
                norm.to_f64_lossy()
            )));
        }
        sweeps += 1;
        // Skip rotations on entries that are already negligible, from the
        // fourth sweep on (Rutishauser's threshold strategy).
        let threshold = if sweeps < 4 {
            T::lit(0.2) * off / T::count(n * n)
        } else {
            T::zero()
        };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let small = T::lit(100.0) * apq.abs();
                if sweeps > 4 && app.abs() + small == app.abs() && aqq.abs() + small == aqq.abs() {
                    m[(p, q)] = T::zero();
                    m[(q, p)] = T::zero();
                    continue;
                }
                if apq.abs() <= threshold {
                    continue;
                }
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    Ok(finish_eigen(m, v, sweeps))
}

#[inline]
fn rotate<T: Real>(m: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let n = m.rows();
    let apq = m[(p, q)];
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    let theta = (aqq - app) / (apq + apq);
    let t = {
        let denom = theta.abs() + (theta * theta + T::one()).sqrt();
        let t = T::one() / denom;
        if theta < T::zero() {
            -t
        } else {
            t
        }
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    let tau = s / (T::one() + c);

    m[(p, p)] = app - t * apq;
    m[(q, q)] = aqq + t * apq;
    m[(p, q)] = T::zero();
    m[(q, p)] = T::zero();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = akp - s * (akq + tau * akp);
        let new_kq = akq + s * (akp - tau * akq);
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp - s * (vkq + tau * vkp);
        v[(k, q)] = vkq + s * (vkp - tau * vkq);
    }
}

fn finish_eigen<T: Real>(m: Matrix<T>, v: Matrix<T>, sweeps: usize) -> SymmetricEigen<T> {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

/// Eigenvalues below this (in absolute terms) are treated as round-off on PSD inputs.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Symmetric PSD square root `S` with `S S = G`.
///
/// Eigenvalues in `[-1e-10, 0)` are clamped to zero; anything more negative
/// is rejected as not positive semi-definite.
pub fn sqrt_psd<T: Real>(g: &Matrix<T>) -> Result<Matrix<T>> {
    if !g.is_square() {
        return Err(Error::invalid("square root needs a square matrix"));
    }
    let scale = T::one() + g.frobenius_norm();
    if g.asymmetry() > T::lit(1e-12) * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (asymmetry {:e})",
            g.asymmetry().to_f64_lossy()
        )));
    }
    let n = g.rows();
    if n == 1 {
        let x = g[(0, 0)];
        if x < -T::lit(PSD_TOLERANCE) {
            return Err(Error::invalid("matrix is not positive semi-definite"));
        }
        return Ok(Matrix::from_diagonal(&[x.max(T::zero()).sqrt()]));
    }
    let eig = jacobi_eigh(g)?;
    let tol = T::lit(PSD_TOLERANCE);
    if eig.min_eigenvalue() < -tol * scale {
        return Err(Error::invalid(format!(
            "matrix is not positive semi-definite (min eigenvalue {:e})",
            eig.min_eigenvalue().to_f64_lossy()
        )));
    }
    let roots: Vec<T> = eig.values.iter().map(|&l| l.max(T::zero()).sqrt()).collect();
    let v = &eig.vectors;
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = T::zero();
            for (k, &r) in roots.iter().enumerate() {
                acc = acc + v[(i, k)] * r * v[(j, k)];
            }
            s[(i, j)] = acc;
            s[(j, i)] = acc;
        }
    }
    Ok(s)
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::invalid("Cholesky needs a square matrix"));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::Eigen(format!(
                "matrix not positive definite: pivot {j} is {:e}",
                d.to_f64_lossy()
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_substitute<T: Real>(l: &Matrix<T>, b: &mut [T]) {
    let n = l.rows();
    for i in 0..n {
        let mut s = b[i];
        let row = l.row(i);
        for k in 0..i {
            s = s - row[k] * b[k];
        }
        b[i] = s / row[i];
    }
}

/// Returns `L^{-1} A L^{-T}` for lower-triangular `L` and symmetric `A`.
pub fn whiten<T: Real>(a: &Matrix<T>, l: &Matrix<T>) -> Matrix<T> {
    let n = a.rows();
    // X = L^{-1} A, column by column.
    let mut x = Matrix::zeros(n, n);
    let mut col = vec![T::zero(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = a[(i, j)];
        }
        forward_substitute(l, &mut col);
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    // Y = L^{-1} X^T, so Y = L^{-1} A^T L^{-T} = L^{-1} A L^{-T}.
    let mut y = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            col[i] = x[(j, i)];
        }
        forward_substitute(l, &mut col);
        for i in 0..n {
            y[(i, j)] = col[i];
        }
    }
    y.symmetrize();
    y
}
