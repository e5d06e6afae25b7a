use std::sync::Arc;

use proptest::prelude::*;
use steinflow::geometry::{
    be_1d, geodesic_shoot, hessian_form, kl_quadrature, matern_rkhs_norm, rayleigh, stein_bilinear, stein_form,
    t_k_rho, DensityField1D, Grid1D, ScalarField1D,
};
use steinflow::kernels::KernelSpec;
use steinflow::linalg::jacobi_eigh;
use steinflow::targets::TargetModel;

fn normal() -> TargetModel<f64> {
    TargetModel::standard_normal(1).unwrap()
}

fn grid(n: usize) -> Grid1D<f64> {
    Grid1D::new(-10.0, 10.0, n).unwrap()
}

fn field(g: &Grid1D<f64>, f: impl Fn(f64) -> f64) -> ScalarField1D<f64> {
    ScalarField1D::from_fn(g.clone(), f).unwrap()
}

#[test]
fn kernel_integral_operator_converges_to_closed_form() {
    // ∫ exp(-(x-y)²/σ²) N(y; 0, 1) dy = σ/√(σ²+2) exp(-x²/(σ²+2)).
    let t = normal();
    let sigma = 0.7f64;
    let k = KernelSpec::gaussian(sigma).unwrap();
    let s2 = sigma * sigma;
    let mut errors = Vec::new();
    for n in [51, 101, 201, 401] {
        let g = grid(n);
        let rho = DensityField1D::from_target(g.clone(), &t).unwrap();
        let out = t_k_rho(&k, &rho, &field(&g, |_| 1.0)).unwrap();
        let err = g
            .nodes()
            .iter()
            .zip(out.values())
            .map(|(&x, &v)| (v - sigma / (s2 + 2.0).sqrt() * (-x * x / (s2 + 2.0)).exp()).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors[3] < 1e-8, "{errors:?}");
    assert!(errors[1] < errors[0], "{errors:?}");
}

#[test]
fn bakry_emery_form_examples() {
    let t = normal();
    let g = grid(2001);
    assert!((be_1d(&field(&g, |x| x), &t).unwrap() - 2.0).abs() < 1e-6);
    assert!((be_1d(&field(&g, |_| 1.0), &t).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn matern_norm_example() {
    // With π^{1/2}φ = exp(-x²/2) the norm is ∫e^{-x²}(1 + x²) dx = 1.5√π.
    let t = normal();
    let g = grid(4001);
    let phi = field(&g, |x| (-0.5 * x * x).exp() / t.density(&[x]).sqrt());
    let v = matern_rkhs_norm(&phi, &t).unwrap();
    assert!((v - 1.5 * std::f64::consts::PI.sqrt()).abs() < 5e-5, "{v}");
}

#[test]
fn kl_examples() {
    let t = normal();
    let g = grid(2001);
    let at_target = kl_quadrature(&DensityField1D::from_target(g.clone(), &t).unwrap(), &t).unwrap();
    assert!(at_target.kl.abs() < 1e-10);
    let shifted = DensityField1D::from_target(g, &TargetModel::normal_1d(1.0, 1.0).unwrap()).unwrap();
    let d = kl_quadrature(&shifted, &t).unwrap();
    assert!((d.kl - 0.5).abs() < 1e-8, "{}", d.kl);
    let entropy = -0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert!((d.reg - entropy).abs() < 1e-8);
    assert!((d.kl - d.reg - d.cost).abs() < 1e-12);
}

#[test]
fn rayleigh_ignores_scale_and_constants() {
    let t = normal();
    let g = grid(801);
    let k = KernelSpec::gaussian(1.0).unwrap();
    let base = rayleigh(&field(&g, |x| x.sin() + 0.2 * x * x), &k, &t).unwrap();
    let moved = rayleigh(&field(&g, |x| -3.0 * (x.sin() + 0.2 * x * x) + 5.0), &k, &t).unwrap();
    assert!((base - moved).abs() < 1e-10 * base.abs());
    assert!(rayleigh(&field(&g, |_| 2.0), &k, &t).is_err());
}

#[test]
fn matern_rayleigh_quotients_stay_above_the_gap() {
    let target = Arc::new(normal());
    let k = KernelSpec::weighted_matern(target.clone()).unwrap();
    let g = Grid1D::new(-8.0, 8.0, 1024).unwrap();
    for psi in [
        field(&g, |x| x),
        field(&g, |x| x * x),
        field(&g, |x| (1.5 * x).sin()),
        field(&g, |x| (-(x - 1.0) * (x - 1.0)).exp()),
    ] {
        let r = rayleigh(&psi, &k, &target).unwrap();
        assert!(r >= 0.45, "{r}");
    }
}

#[test]
fn zero_velocity_geodesic_stays_put() {
    let g = grid(128);
    let rho = DensityField1D::from_target(g.clone(), &normal()).unwrap();
    let k = KernelSpec::gaussian(1.0).unwrap();
    for psi in [ScalarField1D::zeros(g.clone()), field(&g, |_| 3.0)] {
        let traj = geodesic_shoot(&rho, &psi, &k, 1.0, 0.05).unwrap();
        assert!(traj.speeds.iter().all(|&s| s == 0.0));
        let last = traj.densities.last().unwrap();
        assert_eq!(last.values(), rho.values());
    }
}

#[test]
fn one_dimensional_only() {
    let t2 = TargetModel::<f64>::standard_normal(2).unwrap();
    let g = grid(64);
    let psi = field(&g, |x| x);
    assert!(rayleigh(&psi, &KernelSpec::gaussian(1.0).unwrap(), &t2).is_err());
}

/// Smooth test potentials `a sin(b x) + c x + d x²`.
fn potential() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-2.0f64..2.0, 0.3f64..2.0, -1.0f64..1.0, -0.3f64..0.3)
}

fn eval(g: &Grid1D<f64>, (a, b, c, d): (f64, f64, f64, f64)) -> ScalarField1D<f64> {
    field(g, |x| a * (b * x).sin() + c * x + d * x * x)
}

fn bump_density(g: &Grid1D<f64>, m: f64, s: f64, w: f64) -> DensityField1D<f64> {
    DensityField1D::from_fn(g.clone(), |x| {
        (-0.5 * ((x - m) / s).powi(2)).exp() + w * (-0.5 * (x + 1.0) * (x + 1.0)).exp()
    })
    .unwrap()
    .normalized()
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hessian_splits_into_regularity_and_cost(
        psi in potential(),
        m in -1.5f64..1.5,
        s in 0.6f64..1.6,
        w in 0.0f64..1.0,
    ) {
        let g = grid(256);
        let rho = bump_density(&g, m, s, w);
        for k in [KernelSpec::gaussian(1.0).unwrap(), KernelSpec::laplace(1.0).unwrap()] {
            let h = hessian_form(&rho, &eval(&g, psi), &k, &normal()).unwrap();
            prop_assert!((h.total - h.reg - h.cost).abs() <= 1e-9 * (1.0 + h.total.abs() + h.reg.abs()));
        }
    }

    #[test]
    fn stein_bilinear_is_symmetric_and_bilinear(
        a in potential(),
        b in potential(),
        c in potential(),
        alpha in -2.0f64..2.0,
    ) {
        let g = grid(256);
        let rho = bump_density(&g, 0.3, 1.0, 0.5);
        let k = KernelSpec::gaussian(0.8).unwrap();
        let (fa, fb, fc) = (eval(&g, a), eval(&g, b), eval(&g, c));
        let ab = stein_bilinear(&rho, &fa, &fb, &k).unwrap();
        let ba = stein_bilinear(&rho, &fb, &fa, &k).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-10 * (1.0 + ab.abs()));
        let combo = ScalarField1D::new(
            g.clone(),
            fa.values().iter().zip(fb.values()).map(|(x, y)| alpha * x + y).collect(),
        ).unwrap();
        let lhs = stein_bilinear(&rho, &combo, &fc, &k).unwrap();
        let rhs = alpha * stein_bilinear(&rho, &fa, &fc, &k).unwrap() + stein_bilinear(&rho, &fb, &fc, &k).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs() + rhs.abs()));
        prop_assert!(stein_bilinear(&rho, &fa, &fa, &k).unwrap() >= -1e-12);
    }

    #[test]
    fn rayleigh_is_hessian_over_stein_norm(psi in potential()) {
        prop_assume!(psi.0.abs() > 0.1 || psi.2.abs() > 0.1);
        let t = normal();
        let g = grid(512);
        let pi = DensityField1D::from_target(g.clone(), &t).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let f = eval(&g, psi);
        let r = rayleigh(&f, &k, &t).unwrap();
        let h = hessian_form(&pi, &f, &k, &t).unwrap().total;
        let d = stein_bilinear(&pi, &f, &f, &k).unwrap();
        // Both sides are second-order quadratures of the same quantity.
        prop_assert!((r - h / d).abs() <= 5e-4 * r.abs().max(1.0), "{} vs {}", r, h / d);
    }

    #[test]
    fn stein_form_is_symmetric_and_semidefinite(sigma in 0.4f64..2.0, nb in 4usize..24) {
        let t = normal();
        let g = Grid1D::new(-8.0, 8.0, 128).unwrap();
        let form = stein_form(&KernelSpec::gaussian(sigma).unwrap(), &t, &g, nb).unwrap();
        prop_assert!(form.stiffness.is_symmetric(1e-12));
        prop_assert!(form.mass.is_symmetric(1e-12));
        let scale = form.stiffness.frobenius_norm();
        prop_assert!(jacobi_eigh(&form.stiffness).unwrap().min_eigenvalue() >= -1e-10 * scale);
        prop_assert!(jacobi_eigh(&form.mass).unwrap().min_eigenvalue() > 0.0);
    }
}
