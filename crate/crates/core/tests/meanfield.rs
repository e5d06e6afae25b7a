use proptest::prelude::*;
use steinflow::geometry::{DensityField1D, Grid1D};
use steinflow::kernels::KernelSpec;
use steinflow::meanfield::{
    density_quantiles, evolve_pde, particles_vs_pde, stein_pde_rhs, stein_pde_rhs_with, BracketForm, LimitOptions,
};
use steinflow::targets::TargetModel;

fn normal() -> TargetModel<f64> {
    TargetModel::standard_normal(1).unwrap()
}

fn gaussian_bump(g: &Grid1D<f64>, m: f64, s: f64) -> DensityField1D<f64> {
    DensityField1D::from_target(g.clone(), &TargetModel::normal_1d(m, s).unwrap()).unwrap()
}

#[test]
fn target_is_a_steady_state() {
    let t = normal();
    let g = Grid1D::new(-8.0, 8.0, 257).unwrap();
    let pi = DensityField1D::from_target(g, &t).unwrap();
    for k in [KernelSpec::gaussian(1.0).unwrap(), KernelSpec::laplace(1.0).unwrap()] {
        let r = stein_pde_rhs(&pi, &k, &t).unwrap();
        assert!(
            r.iter().all(|v| v.abs() < 1e-13),
            "{:e}",
            r.iter().fold(0.0f64, |a, b| a.max(b.abs()))
        );
    }
}

#[test]
fn rhs_converges_under_refinement() {
    // Compare with a grid four times finer on the shared nodes.
    let t = normal();
    let k = KernelSpec::gaussian(1.0).unwrap();
    let rhs = |n: usize| {
        let g = Grid1D::new(-8.0, 8.0, n).unwrap();
        stein_pde_rhs_with(&gaussian_bump(&g, 1.0, 0.8), &k, &t, BracketForm::Direct).unwrap()
    };
    let mut errors = Vec::new();
    for n in [65, 129, 257] {
        let coarse = rhs(n);
        let fine = rhs(4 * (n - 1) + 1);
        let err = coarse
            .iter()
            .enumerate()
            .map(|(i, c)| (c - fine[4 * i]).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors[2] < 1e-3, "{errors:?}");
    assert!(errors[0] / errors[1] > 3.0 && errors[1] / errors[2] > 3.0, "{errors:?}");
}

#[test]
fn kl_decays_and_mass_is_conserved() {
    let t = normal();
    let g = Grid1D::for_target(&t, 256).unwrap();
    let rho0 = DensityField1D::from_fn(g, |x| {
        (-(x - 1.5) * (x - 1.5)).exp() + 0.5 * (-(x + 1.0) * (x + 1.0) / 0.3).exp()
    })
    .unwrap()
    .normalized()
    .unwrap();
    for k in [KernelSpec::gaussian(1.0).unwrap(), KernelSpec::laplace(1.0).unwrap()] {
        let run = evolve_pde(&rho0, &k, &t, 3.0, 0.01, 5).unwrap();
        assert!(run.max_kl_increase() <= 0.0, "{}", run.max_kl_increase());
        assert!(run.fisher_series.iter().all(|&(_, f)| f >= 0.0));
        assert!((run.density.mass() - rho0.mass()).abs() < 1e-12);
        assert!(run.clipped_mass == 0.0);
        let (first, last) = (run.kl_series[0].1, run.kl_series.last().unwrap().1);
        assert!(last < 0.5 * first, "{first} -> {last}");
    }
}

#[test]
fn initial_sampling_error_scales_like_inverse_root_n() {
    let t = normal();
    let k = KernelSpec::gaussian(1.0).unwrap();
    let seeds: Vec<u64> = (1..=30).collect();
    let opts = LimitOptions {
        grid_nodes: 512,
        ..LimitOptions::default()
    };
    let pts = particles_vs_pde(&[100, 400], &k, &t, &t, 0.0, &seeds, &opts).unwrap();
    let ratio = pts[0].w1_mean / pts[1].w1_mean;
    assert!((1.0..=4.0).contains(&ratio), "{ratio}");
    assert_eq!(pts[0].w1_per_seed.len(), 30);
}

#[test]
fn quantiles_of_the_standard_normal() {
    let t = normal();
    let g = Grid1D::for_target(&t, 2048).unwrap();
    let q = density_quantiles(&DensityField1D::from_target(g, &t).unwrap(), 5);
    for (a, b) in q
        .iter()
        .zip([-1.2815515655, -0.5244005127, 0.0, 0.5244005127, 1.2815515655])
    {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetric_densities_have_even_rhs(s in 0.5f64..2.0, sep in 0.0f64..2.0, sigma in 0.5f64..2.0) {
        // Even ρ, odd velocity, so the divergence of the flux is even again.
        let t = normal();
        let g = Grid1D::new(-8.0, 8.0, 129).unwrap();
        let rho = DensityField1D::from_fn(g, |x| {
            (-0.5 * ((x - sep) / s).powi(2)).exp() + (-0.5 * ((x + sep) / s).powi(2)).exp()
        }).unwrap().normalized().unwrap();
        for form in [BracketForm::Ratio, BracketForm::Direct] {
            let r = stein_pde_rhs_with(&rho, &KernelSpec::gaussian(sigma).unwrap(), &t, form).unwrap();
            let scale = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for i in 0..r.len() {
                prop_assert!((r[i] - r[r.len() - 1 - i]).abs() <= 1e-12 * (1.0 + scale));
            }
        }
    }

    #[test]
    fn rhs_conserves_mass(m in -2.0f64..2.0, s in 0.4f64..2.0) {
        let t = normal();
        let g = Grid1D::new(-8.0, 8.0, 129).unwrap();
        let rho = gaussian_bump(&g, m, s);
        let r = stein_pde_rhs(&rho, &KernelSpec::laplace(1.0).unwrap(), &t).unwrap();
        let scale = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        prop_assert!(g.integrate(&r).abs() <= 1e-13 * (1.0 + scale));
    }
}
