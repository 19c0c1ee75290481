use std::sync::Arc;

use beliefmdp::kernel::{
    build_aumann_map, density_via_change_of_variables, joint_kernel, pushforward_kernel, transition_kernel,
    KernelFamily,
};
use beliefmdp::model::{check_diffeomorphic, sample_noise, DiffeoTolerances, ParamMap, Verdict, CATALOG_NAMES};
use beliefmdp::region::BoxRegion;
use beliefmdp::stats::{correlation, mean, variance};
use beliefmdp::{catalog_model, NoiseDistribution};
use nalgebra::DMatrix;
use proptest::prelude::*;
use serde_json::json;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn column(points: &[Vec<f64>], j: usize) -> Vec<f64> {
    points.iter().map(|p| p[j]).collect()
}

#[test]
fn point_mass_samples_are_the_atom() {
    let d = NoiseDistribution::point_mass(vec![1.5, -2.0]).unwrap();
    assert_eq!(sample_noise(&d, 7, 3).unwrap(), vec![vec![1.5, -2.0]; 3]);
}

#[test]
fn uniform_and_normal_moments() {
    let u = NoiseDistribution::uniform(vec![0.0], vec![1.0]).unwrap();
    let xs = column(&sample_noise(&u, 1, 10_000).unwrap(), 0);
    assert!((mean(&xs) - 0.5).abs() <= 0.02);
    assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
    let n = NoiseDistribution::standard_normal(1);
    let xs = column(&sample_noise(&n, 1, 10_000).unwrap(), 0);
    assert!((variance(&xs) - 1.0).abs() <= 0.05);
}

#[test]
fn negative_counts_are_rejected() {
    assert!(sample_noise(&NoiseDistribution::standard_normal(1), 1, -1).is_err());
}

#[test]
fn densities_integrate_to_one_over_their_support() {
    let laws = [
        NoiseDistribution::uniform(vec![-1.0], vec![3.0]).unwrap(),
        NoiseDistribution::diag_gaussian(&[0.5]).unwrap(),
        NoiseDistribution::exponential(vec![2.0]).unwrap(),
    ];
    for law in &laws {
        let b = law.support_hint().unwrap_or_else(|| law.truncated_box(1.0 - 1e-6));
        let n = 20_001;
        let h = b.width(0) / (n - 1) as f64;
        let f: Vec<f64> = (0..n).map(|i| law.density(&[b.low[0] + i as f64 * h]).unwrap()).collect();
        let trap = h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]));
        assert!((trap - 1.0).abs() <= 1e-3, "{:?}: {trap}", law.spec());
        if let Some(s) = law.support_hint() {
            assert!(law.sample(3, 2000).iter().all(|x| s.contains(x)));
        }
    }
}

proptest! {
    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), count in 1usize..50) {
        let d = NoiseDistribution::mixture(
            0.3,
            NoiseDistribution::standard_normal(2).spec().clone(),
            NoiseDistribution::uniform(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap().spec().clone(),
        ).unwrap();
        let a = d.sample(seed, count);
        let b = d.sample(seed, count);
        prop_assert_eq!(a.len(), count);
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.iter().zip(q).all(|(x, y)| x.to_bits() == y.to_bits())));
    }

    #[test]
    fn shift_density_is_the_shifted_normal(s2 in -3.0f64..3.0, t in -4.0f64..4.0) {
        // inside the truncated noise box, ±4.75σ
        let s1 = s2 + t;
        let phi = ParamMap::new("shift", 1, 1, 1, |s, w| vec![s[0] + w[0]]);
        let f = density_via_change_of_variables(&phi, &NoiseDistribution::standard_normal(1), &[s2], &[s1]).unwrap();
        let want = Normal::new(s2, 1.0).unwrap().pdf(s1);
        prop_assert!((f - want).abs() <= 1e-10);
    }

    #[test]
    fn scaled_uniform_density(s2 in 0.2f64..3.0, t in -0.5f64..1.5) {
        let phi = ParamMap::new("scale", 1, 1, 1, |s, w| vec![s[0] * w[0]]);
        let p = NoiseDistribution::uniform(vec![0.0], vec![1.0]).unwrap();
        // stay clear of the edges of the image
        prop_assume!((t - 0.0).abs() > 1e-3 && (t - 1.0).abs() > 1e-3);
        let f = density_via_change_of_variables(&phi, &p, &[s2], &[t * s2]).unwrap();
        let want = if (0.0..1.0).contains(&t) { 1.0 / s2 } else { 0.0 };
        prop_assert!((f - want).abs() <= 1e-9, "{} vs {}", f, want);
    }
}

#[test]
fn step_state_examples() {
    let lssm = catalog_model("lssm", &json!({ "f1": 1.0, "f2": 1.0 })).unwrap();
    assert_eq!(lssm.step_state(&[1.0], &[2.0], &[0.5]).unwrap(), vec![3.5]);
    let arctan = catalog_model("arctan_example", &json!({})).unwrap();
    assert_eq!(arctan.step_state(&[0.0], &[0.0], &[0.0]).unwrap(), vec![0.0]);
    let lost = catalog_model("inventory_lost_sales", &json!({ "d": 2 })).unwrap();
    assert_eq!(lost.step_state(&[1.0, 3.0], &[1.0, 0.0], &[5.0, 1.0]).unwrap(), vec![0.0, 2.0]);
}

#[test]
fn observe_examples() {
    let additive = catalog_model("lssm", &json!({ "g": 1.0 })).unwrap();
    assert_eq!(additive.observe(&[0.0], &[2.0], &[0.1]).unwrap(), vec![2.1]);
    // y = diag(η)(1 + x'²)
    let mult = catalog_model("multiplicative_nonlinear", &json!({})).unwrap();
    assert_eq!(mult.observe(&[0.0], &[2.0], &[3.0]).unwrap(), vec![15.0]);
    let delta = catalog_model("delta_noise_counterexample", &json!({})).unwrap();
    let eta = delta.obs_noise().sample(1, 1).remove(0);
    assert_eq!(delta.observe(&[0.0], &[0.7], &eta).unwrap(), vec![0.7]);
}

#[test]
fn every_catalog_model_evaluates_on_its_own_noise() {
    for name in CATALOG_NAMES {
        let m = catalog_model(name, &json!({})).unwrap();
        let d = m.dims();
        let x = vec![0.5; d.state];
        let a = vec![0.25; d.action];
        let xi = m.state_noise().sample(1, 20);
        let eta = m.obs_noise().sample(2, 20);
        for (s, e) in xi.iter().zip(&eta) {
            let xn = m.step_state(&x, &a, s).unwrap();
            assert_eq!(xn.len(), d.state, "{name}");
            let y = m.observe_step(&x, &a, &xn, e).unwrap();
            assert_eq!(y.len(), d.obs, "{name}");
            assert!(xn.iter().chain(&y).all(|v| v.is_finite()), "{name}");
        }
    }
    assert!(catalog_model("lssm", &json!({ "bogus": 1 })).is_err());
    assert!(catalog_model("no_such_model", &json!({})).is_err());
}

#[test]
fn diffeomorphic_probe_verdicts() {
    let tol = DiffeoTolerances::default();
    let additive = ParamMap::new("additive", 1, 2, 2, |s, w| vec![s[0].sin() + w[0], s[0] * s[0] + w[1]]);
    let r = check_diffeomorphic(&additive, &BoxRegion::cube(1, -1.0, 1.0), &BoxRegion::cube(2, -2.0, 2.0), 6, &tol).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!((r.min_abs_jacobian_det - 1.0).abs() < 1e-6);

    let arctan = catalog_model("arctan_example", &json!({})).unwrap().transition_map();
    let r = check_diffeomorphic(&arctan, &BoxRegion::cube(2, -1.0, 1.0), &BoxRegion::cube(1, -10.0, 10.0), 11, &tol).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);

    let flat = ParamMap::new("flat", 1, 2, 2, |_, w| vec![w[0] + w[1], w[0] + w[1]]);
    let r = check_diffeomorphic(&flat, &BoxRegion::cube(1, 0.0, 1.0), &BoxRegion::cube(2, -1.0, 1.0), 5, &tol).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.min_abs_jacobian_det <= tol.singularity_tol);
}

#[test]
fn pushforward_examples() {
    let p = NoiseDistribution::uniform(vec![-1.0], vec![2.0]).unwrap();
    let id = ParamMap::new("identity", 0, 1, 1, |_, w| w.to_vec());
    let k = pushforward_kernel(&id, &p, &[], 100, 9).unwrap();
    assert_eq!(k.points().unwrap(), p.sample(9, 100).as_slice());

    let delta = catalog_model("delta_noise_counterexample", &json!({})).unwrap();
    let k = transition_kernel(&delta, &[0.4], &[0.0], 50, 1).unwrap();
    assert!(k.points().unwrap().iter().all(|x| x == &vec![0.4]));

    let backorder = catalog_model("inventory_backorder", &json!({})).unwrap();
    let k = transition_kernel(&backorder, &[5.0], &[0.0], 2000, 1).unwrap();
    assert!(k.points().unwrap().iter().all(|x| (4.0..=5.0).contains(&x[0])));

    let lssm = catalog_model("lssm", &json!({})).unwrap();
    let n = 10_000;
    let k = transition_kernel(&lssm, &[0.0], &[0.0], n, 2).unwrap();
    assert!(k.mean()[0].abs() <= 3.0 / (n as f64).sqrt());
}

#[test]
fn lssm_joint_covariance_matches_gaussian_algebra() {
    let m = catalog_model("lssm", &json!({ "g": 2.0 })).unwrap();
    let k = joint_kernel(&m, &[1.0], &[0.5], 100_000, 3).unwrap();
    let c = k.covariance();
    // x' = 0.9 + 0.5 + ξ, y = 2x' + η: var x' = 1, cov = 2, var y = 4 + 0.25
    let want = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.25]);
    for i in 0..2 {
        for j in 0..2 {
            assert!((c[(i, j)] - want[(i, j)]).abs() <= 0.05 * want[(i, j)], "{c}");
        }
    }
}

#[test]
fn noiseless_identity_sensor_repeats_the_state() {
    let m = catalog_model("delta_noise_counterexample", &json!({})).unwrap();
    let k = joint_kernel(&m, &[0.3], &[0.2], 20, 1).unwrap();
    assert!(k.points().unwrap().iter().all(|p| p[0] == p[1]));
}

#[test]
fn current_state_sensor_is_independent_of_the_next_state() {
    let m = catalog_model("lssm", &json!({ "flavor": "pomdp1", "g": 0.0 })).unwrap();
    let n = 20_000;
    let k = joint_kernel(&m, &[0.5], &[0.0], n, 6).unwrap();
    let pts = k.points().unwrap();
    let r = correlation(&column(pts, 0), &column(pts, 1));
    assert!(r.abs() <= 3.0 / (n as f64).sqrt(), "{r}");
}

#[test]
fn two_outcome_aumann_map_hits_the_probabilities() {
    let fam = KernelFamily::FiniteTable {
        param_dim: 1,
        outcomes: vec![vec![1.0], vec![-1.0]],
        probs: Arc::new(|s| vec![s[0], 1.0 - s[0]]),
    };
    let phi = build_aumann_map(&fam).unwrap().to_param_map();
    let u = NoiseDistribution::uniform(vec![0.0], vec![1.0]).unwrap();
    let n = 20_000;
    for p in [0.1, 0.5, 0.83] {
        let k = pushforward_kernel(&phi, &u, &[p], n, 4).unwrap();
        let f = k.points().unwrap().iter().filter(|x| x[0] == 1.0).count() as f64 / n as f64;
        assert!((f - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "{f} vs {p}");
    }
    let c = build_aumann_map(&KernelFamily::Constant(vec![2.0, 3.0])).unwrap();
    assert_eq!(c.eval(&[], &[0.2, 0.9]).unwrap(), vec![2.0, 3.0]);
}

#[test]
fn bivariate_gaussian_determinant_and_density() {
    let s: f64 = 0.5;
    let map = build_aumann_map(&KernelFamily::bivariate_normal_correlation()).unwrap();
    let phi = map.to_param_map();
    let std = Normal::new(0.0, 1.0).unwrap();
    for w1 in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for w2 in [0.2, 0.5, 0.8] {
            let w = [w1, w2];
            let want = (1.0 - s * s).sqrt() / (std.pdf(std.inverse_cdf(w1)) * std.pdf(std.inverse_cdf(w2)));
            let fd = phi.fd_jacobian(&[s], &w).unwrap().determinant();
            assert!((fd - want).abs() <= 1e-4 * want, "{fd} vs {want}");
            assert!((map.closed_form_det(&[s], &w).unwrap() - want).abs() <= 1e-10 * want);
        }
    }
    let u = NoiseDistribution::uniform(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let f = density_via_change_of_variables(&phi, &u, &[s], &[0.0, 0.0]).unwrap();
    let want = 1.0 / (2.0 * std::f64::consts::PI * (1.0 - s * s).sqrt());
    assert!((f - want).abs() <= 1e-6 * want, "{f} vs {want}");
    let k = pushforward_kernel(&phi, &u, &[s], 100_000, 8).unwrap();
    let pts = k.points().unwrap();
    assert!((correlation(&column(pts, 0), &column(pts, 1)) - s).abs() <= 0.01);
}
