use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use steinflow::dynamics::{
    evolve_deterministic, evolve_langevin, evolve_stochastic, stochastic_drift, svgd_velocity, svgd_velocity_field,
    IntegratorConfig, ParticleEnsemble,
};
use steinflow::kernels::{median_bandwidth, KernelSpec};
use steinflow::metrics::w1_1d;
use steinflow::targets::{paper_targets, TargetModel};

fn std_normal(d: usize) -> TargetModel<f64> {
    TargetModel::standard_normal(d).unwrap()
}

fn velocity(points: &[f64], dim: usize, k: &KernelSpec<f64>, t: &TargetModel<f64>) -> Vec<f64> {
    let mut v = vec![0.0; points.len()];
    svgd_velocity_field(points, dim, k, t, &mut v).unwrap();
    v
}

fn permute(points: &[f64], dim: usize, perm: &[usize]) -> Vec<f64> {
    perm.iter()
        .flat_map(|&i| points[i * dim..(i + 1) * dim].to_vec())
        .collect()
}

#[test]
fn single_particle_velocity_is_minus_gradient() {
    let t = std_normal(2);
    for k in [KernelSpec::gaussian(0.5).unwrap(), KernelSpec::laplace(2.0).unwrap()] {
        let mut e = ParticleEnsemble::new(vec![0.7, -1.2], 2, 0).unwrap();
        assert_eq!(svgd_velocity(&mut e, &k, &t).unwrap(), vec![-0.7, 1.2]);
    }
}

#[test]
fn symmetric_pair_moves_antisymmetrically() {
    let t = std_normal(1);
    let k = KernelSpec::gaussian(1.0).unwrap();
    for a in [0.1, 0.8, 2.5] {
        let v = velocity(&[-a, a], 1, &k, &t);
        assert!((v[0] + v[1]).abs() <= 1e-15 * v[0].abs().max(1.0));
    }
}

#[test]
fn permuting_particles_permutes_the_trajectory() {
    let (t, _) = paper_targets::<f64>();
    let k = KernelSpec::gaussian(0.8).unwrap();
    let start = ParticleEnsemble::<f64>::standard_normal(12, 1, 4).unwrap();
    let perm: Vec<usize> = (0..12).rev().collect();
    let mut a = start.clone();
    let mut b = ParticleEnsemble::new(permute(start.positions(), 1, &perm), 1, 4).unwrap();
    let cfg = IntegratorConfig::euler(0.01);
    evolve_deterministic(&mut a, &k, &t, 5.0, &cfg, &[], |_| Ok(())).unwrap();
    evolve_deterministic(&mut b, &k, &t, 5.0, &cfg, &[], |_| Ok(())).unwrap();
    let pa = permute(a.positions(), 1, &perm);
    for (x, y) in pa.iter().zip(b.positions()) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn gradient_count_matches_integrator_log() {
    let t = std_normal(2);
    let k = KernelSpec::gaussian(1.0).unwrap();
    let mut e = ParticleEnsemble::standard_normal(10, 2, 1).unwrap();
    let stats = evolve_deterministic(&mut e, &k, &t, 3.0, &IntegratorConfig::default(), &[1.0, 2.0], |_| {
        Ok(())
    })
    .unwrap();
    assert_eq!(e.grad_evals(), 10 * stats.rhs_evals as u64);
    assert_eq!(e.pair_evals(), 100 * stats.rhs_evals as u64);
    let logged: usize = stats.steps.iter().map(|s| s.rhs_evals).sum();
    assert_eq!(logged, stats.rhs_evals);
}

#[test]
fn trajectories_do_not_depend_on_thread_count() {
    let (t, _) = paper_targets::<f64>();
    let k = KernelSpec::gaussian(0.6).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut e = ParticleEnsemble::<f64>::standard_normal(150, 1, 9).unwrap();
            evolve_deterministic(&mut e, &k, &t, 2.0, &IntegratorConfig::default(), &[], |_| Ok(())).unwrap();
            e.positions().to_vec()
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn benchmark_run_improves_over_time() {
    let (t, _) = paper_targets::<f64>();
    let mut e = ParticleEnsemble::<f64>::standard_normal(200, 1, 2).unwrap();
    let sigma = median_bandwidth(e.positions(), 1, 2.0, 200).unwrap();
    let k = KernelSpec::gaussian(sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let reference = t.sample_flat(100_000, &mut rng);
    let mut w = Vec::new();
    evolve_deterministic(&mut e, &k, &t, 500.0, &IntegratorConfig::default(), &[50.0], |s| {
        w.push(w1_1d(s.positions(), &reference)?);
        Ok(())
    })
    .unwrap();
    assert_eq!(w.len(), 2);
    assert!(w[1].is_finite() && w[1] < w[0], "{w:?}");
}

#[test]
fn stochastic_particles_stay_distinct() {
    let t = std_normal(2);
    let k = KernelSpec::gaussian(1.0).unwrap();
    let mut e = ParticleEnsemble::standard_normal(8, 2, 5).unwrap();
    let schedule: Vec<f64> = (1..200).map(|i| i as f64 * 0.25).collect();
    let mut closest = f64::INFINITY;
    evolve_stochastic(&mut e, &k, &t, 50.0, 0.01, &[], &schedule, |s| {
        closest = closest.min(s.min_pairwise_distance());
        Ok(())
    })
    .unwrap();
    assert!(closest > 0.0);
}

#[test]
fn stochastic_runs_are_reproducible() {
    let t = std_normal(1);
    let k = KernelSpec::laplace(1.0).unwrap();
    let run = || {
        let mut e = ParticleEnsemble::standard_normal(6, 1, 21).unwrap();
        evolve_stochastic(&mut e, &k, &t, 2.0, 0.01, &[], &[], |_| Ok(())).unwrap();
        e.positions().to_vec()
    };
    assert_eq!(run(), run());
}

fn langevin_second_moment(dt: f64) -> f64 {
    let t = std_normal(1);
    let sq = |x: &[f64]| x[0] * x[0];
    let mut e = ParticleEnsemble::standard_normal(2000, 1, 8).unwrap();
    evolve_langevin(&mut e, &t, 100.0, dt, &[&sq], &[], |_| Ok(()))
        .unwrap()
        .time_averages[0]
}

#[test]
fn langevin_keeps_the_stationary_moment() {
    let m = langevin_second_moment(0.01);
    assert!((m - 1.0).abs() < 0.05, "{m}");
}

#[test]
fn langevin_weak_error_shrinks_with_dt() {
    let coarse = (langevin_second_moment(0.2) - 1.0).abs();
    let fine = (langevin_second_moment(0.1) - 1.0).abs();
    assert!(fine < coarse, "{fine} vs {coarse}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn velocity_is_permutation_equivariant(
        pts in proptest::collection::vec(-4.0f64..4.0, 2..20),
        seed in any::<u64>(),
    ) {
        let n = pts.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let (t, _) = paper_targets::<f64>();
        for k in [KernelSpec::gaussian(0.9).unwrap(), KernelSpec::laplace(0.5).unwrap()] {
            let v = velocity(&pts, 1, &k, &t);
            let vp = velocity(&permute(&pts, 1, &perm), 1, &k, &t);
            let d = stochastic_drift(&pts, 1, &k, &t).unwrap();
            let dp = stochastic_drift(&permute(&pts, 1, &perm), 1, &k, &t).unwrap();
            for (i, &pi) in perm.iter().enumerate() {
                prop_assert!((vp[i] - v[pi]).abs() <= 1e-13 * (1.0 + v[pi].abs()));
                prop_assert!((dp[i] - d[pi]).abs() <= 1e-13 * (1.0 + d[pi].abs()));
            }
        }
    }

    #[test]
    fn symmetric_ensembles_have_odd_velocity(half in proptest::collection::vec(0.01f64..5.0, 1..10)) {
        let pts: Vec<f64> = half.iter().copied().chain(half.iter().map(|x| -x)).collect();
        let t = std_normal(1);
        let m = half.len();
        for k in [KernelSpec::gaussian(1.2).unwrap(), KernelSpec::laplace(0.7).unwrap()] {
            let v = velocity(&pts, 1, &k, &t);
            for i in 0..m {
                prop_assert!((v[i] + v[m + i]).abs() <= 1e-13 * (1.0 + v[i].abs()));
            }
        }
    }
}
