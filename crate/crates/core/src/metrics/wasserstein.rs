use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};

fn sorted<T: Real>(v: &[T]) -> Result<Vec<T>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("sample contains non-finite values"));
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(s)
}

/// Exact W1 between two 1D empirical measures by quantile coupling.
///
/// For unequal sizes the two quantile functions are integrated over the merged
/// partition of `[0, 1]`, counted in integer units of `1 / (n_a n_b)` so that
/// no breakpoint is lost to rounding.
pub fn w1_1d<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("W1 needs two nonempty samples"));
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    if a.len() == b.len() {
        let s: T = a.iter().zip(&b).map(|(&x, &y)| (x - y).abs()).sum();
        return Ok(s / T::count(a.len()));
    }
    let (na, nb) = (a.len() as u64, b.len() as u64);
    let total = na * nb;
    let (mut i, mut j) = (0usize, 0usize);
    let (mut pos, mut acc) = (0u64, T::zero());
    while pos < total {
        let end_a = (i as u64 + 1) * nb;
        let end_b = (j as u64 + 1) * na;
        let end = end_a.min(end_b);
        acc = acc + T::lit((end - pos) as f64) * (a[i] - b[j]).abs();
        pos = end;
        if end == end_a {
            i += 1;
        }
        if end == end_b {
            j += 1;
        }
    }
    Ok(acc / T::lit(total as f64))
}

/// Largest problem accepted by [`w1_assignment`].
pub const MAX_ASSIGNMENT_SIZE: usize = 2048;

fn euclid<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .fold(T::zero(), |s, v| s + v)
        .sqrt()
}

fn check_points<T: Real>(pts: &[T], dim: usize) -> Result<usize> {
    if dim == 0 || pts.is_empty() || !pts.len().is_multiple_of(dim) {
        return Err(Error::invalid("point buffer is not a nonempty whole number of rows"));
    }
    if pts.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points contain non-finite values"));
    }
    Ok(pts.len() / dim)
}

/// Exact W1 between two uniform empirical measures of equal size `n` by a
/// minimum-cost perfect matching on Euclidean distances, divided by `n`.
pub fn w1_assignment<T: Real>(a: &[T], b: &[T], dim: usize) -> Result<T> {
    let n = check_points(a, dim)?;
    let m = check_points(b, dim)?;
    if n != m {
        return Err(Error::invalid(format!("assignment needs equal sizes, got {n} and {m}")));
    }
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::invalid(format!(
            "assignment limited to {MAX_ASSIGNMENT_SIZE} points, got {n}"
        )));
    }
    let cost = |i: usize, j: usize| euclid(&a[i * dim..(i + 1) * dim], &b[j * dim..(j + 1) * dim]);
    let matching = hungarian(n, cost);
    let total: T = matching.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
    Ok(total / T::count(n))
}

/// Shortest augmenting path Hungarian method with row/column potentials.
/// Returns `assign[row] = column`.
fn hungarian<T: Real>(n: usize, cost: impl Fn(usize, usize) -> T) -> Vec<usize> {
    // 1-based indexing with a virtual column 0, as in the classical formulation.
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Outcome of an entropic OT solve.
#[derive(Clone, Debug)]
pub struct SinkhornResult<T> {
    /// Transport cost of the rounded feasible plan (never below the exact W1).
    pub cost: T,
    pub converged: bool,
    pub iterations: usize,
    /// `‖P 1 - a‖₁` of the unrounded plan at exit; convergence means at most 1e-5.
    pub marginal_error: T,
}

/// Entropic OT between uniform empirical measures with Euclidean cost.
///
/// Log-domain Sinkhorn iterations with ε-scaling from a coarse regularization
/// down to `epsilon`; the final plan is rounded onto the transport polytope
/// before its cost is evaluated. Non-convergence is reported in the result,
/// not as an error.
/// Iteration cap for each intermediate ε-scaling stage.
const WARM_STAGE_ITERS: usize = 100;

pub fn w1_sinkhorn<T: Real>(a: &[T], b: &[T], dim: usize, epsilon: T, max_iters: usize) -> Result<SinkhornResult<T>> {
    let n = check_points(a, dim)?;
    let m = check_points(b, dim)?;
    if !(epsilon > T::zero()) {
        return Err(Error::invalid("Sinkhorn needs epsilon > 0"));
    }
    let mut c = vec![T::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            c[i * m + j] = euclid(&a[i * dim..(i + 1) * dim], &b[j * dim..(j + 1) * dim]);
        }
    }
    let cmax = c.iter().copied().fold(T::zero(), T::max);
    let log_a = -T::count(n).ln();
    let log_b = -T::count(m).ln();
    // Rounding restores exact marginals, moving the cost by at most `err * cmax`.
    let tol = T::lit(1e-5);

    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); m];
    let mut buf = vec![T::zero(); n.max(m)];
    let mut iterations = 0;
    let mut converged = false;
    let mut marginal_error = T::infinity();

    // ε-scaling: halve the regularization until the target is reached.
    let mut eps = epsilon.max(cmax);
    loop {
        let last = eps <= epsilon;
        let stage_eps = if last { epsilon } else { eps };
        let stage_start = iterations;
        loop {
            if iterations >= max_iters || (!last && iterations - stage_start >= WARM_STAGE_ITERS) {
                break;
            }
            iterations += 1;
            for i in 0..n {
                for j in 0..m {
                    buf[j] = (g[j] - c[i * m + j]) / stage_eps;
                }
                f[i] = stage_eps * (log_a - log_sum_exp(&buf[..m]));
            }
            for j in 0..m {
                for i in 0..n {
                    buf[i] = (f[i] - c[i * m + j]) / stage_eps;
                }
                g[j] = stage_eps * (log_b - log_sum_exp(&buf[..n]));
            }
            // After the g-update columns are exact; measure the row marginals.
            if iterations % 10 == 0 || iterations >= max_iters {
                let mut err = T::zero();
                let a_w = log_a.exp();
                for i in 0..n {
                    let mut r = T::zero();
                    for j in 0..m {
                        r = r + ((f[i] + g[j] - c[i * m + j]) / stage_eps).exp();
                    }
                    err = err + (r - a_w).abs();
                }
                marginal_error = err;
                // Intermediate stages only need a warm start for the next one.
                let stage_tol = if last { tol } else { T::lit(1e-3) };
                if err <= stage_tol {
                    if last {
                        converged = true;
                    }
                    break;
                }
            }
        }
        if last || iterations >= max_iters {
            break;
        }
        eps = eps * T::lit(0.5);
    }

    let plan = round_plan(&f, &g, &c, epsilon, n, m);
    let cost = plan.iter().zip(&c).map(|(&p, &cij)| p * cij).sum::<T>().max(T::zero());
    Ok(SinkhornResult {
        cost,
        converged,
        iterations,
        marginal_error,
    })
}

/// Projects `P_ij = exp((f_i + g_j - C_ij)/ε)` onto the plans with uniform
/// marginals (scale down overfull rows, then columns, then add the rank-one
/// correction of the remaining deficits).
fn round_plan<T: Real>(f: &[T], g: &[T], c: &[T], eps: T, n: usize, m: usize) -> Vec<T> {
    let a_w = T::one() / T::count(n);
    let b_w = T::one() / T::count(m);
    let mut p: Vec<T> = (0..n * m)
        .map(|idx| ((f[idx / m] + g[idx % m] - c[idx]) / eps).exp())
        .collect();
    for i in 0..n {
        let r: T = p[i * m..(i + 1) * m].iter().copied().sum();
        if r > a_w {
            let s = a_w / r;
            p[i * m..(i + 1) * m].iter_mut().for_each(|x| *x = *x * s);
        }
    }
    for j in 0..m {
        let col: T = (0..n).map(|i| p[i * m + j]).sum();
        if col > b_w {
            let s = b_w / col;
            (0..n).for_each(|i| p[i * m + j] = p[i * m + j] * s);
        }
    }
    let err_r: Vec<T> = (0..n)
        .map(|i| a_w - p[i * m..(i + 1) * m].iter().copied().sum::<T>())
        .collect();
    let err_c: Vec<T> = (0..m).map(|j| b_w - (0..n).map(|i| p[i * m + j]).sum::<T>()).collect();
    let mass: T = err_r.iter().copied().sum();
    if mass > T::zero() {
        for i in 0..n {
            for j in 0..m {
                p[i * m + j] = p[i * m + j] + err_r[i] * err_c[j] / mass;
            }
        }
    }
    p
}
