use beliefmdp::continuity::feller::union_sup;
use beliefmdp::continuity::{
    bl_distance, continuity_profile, feller_modulus, set_convergence_check, tv_distance, ContinuityVerdict, SetShape,
};
use beliefmdp::kernel::{KernelEstimate, KernelSource};
use beliefmdp::model::ParamMap;
use beliefmdp::region::{BoxRegion, RectGrid};
use beliefmdp::{catalog_model, NoiseDistribution};
use proptest::prelude::*;
use serde_json::json;

fn seeded(seed: u64) -> KernelSource {
    KernelSource {
        seed: Some(seed),
        ..Default::default()
    }
}

fn empirical(points: Vec<Vec<f64>>) -> KernelEstimate {
    let d = points[0].len();
    KernelEstimate::empirical(d, points, seeded(1)).unwrap()
}

fn gridded(values: Vec<f64>) -> KernelEstimate {
    let grid = RectGrid::over(&BoxRegion::cube(1, 0.0, 1.0), values.len()).unwrap();
    KernelEstimate::gridded(grid, values, KernelSource::default()).unwrap()
}

fn density() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 16).prop_filter("no mass", |v| v.iter().sum::<f64>() > 1e-3)
}

proptest! {
    #[test]
    fn gridded_tv_is_a_metric(a in density(), b in density(), c in density()) {
        let (ka, kb, kc) = (gridded(a), gridded(b), gridded(c));
        let ab = tv_distance(&ka, &kb).unwrap().value;
        let ba = tv_distance(&kb, &ka).unwrap().value;
        let ac = tv_distance(&ka, &kc).unwrap().value;
        let cb = tv_distance(&kc, &kb).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(tv_distance(&ka, &ka).unwrap().value == 0.0);
    }

    #[test]
    fn bl_is_dominated_by_coupled_tv_and_transport(
        base in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 20..60),
        moved in prop::collection::vec(any::<bool>(), 60),
        shift in prop::collection::vec(-0.5f64..0.5, 2),
        seed in 0u64..1000,
    ) {
        let other: Vec<Vec<f64>> = base
            .iter()
            .zip(&moved)
            .map(|(p, m)| if *m { vec![p[0] + shift[0], p[1] + shift[1]] } else { p.clone() })
            .collect();
        let (k1, k2) = (empirical(base.clone()), empirical(other.clone()));
        let tv = tv_distance(&k1, &k2).unwrap().value;
        let bl = bl_distance(&k1, &k2, 64, seed).unwrap().value;
        // every test function has range in [-1, 1] and is 1-Lipschitz
        let transport = base.iter().zip(&other).map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).sum::<f64>() / base.len() as f64;
        prop_assert!(bl <= 2.0 * tv + 1e-12);
        prop_assert!(bl <= transport + 1e-12);
    }

    #[test]
    fn union_sup_matches_subset_enumeration(d in prop::collection::vec(-1.0f64..1.0, 1..10)) {
        let (v, _) = union_sup(&d);
        let mut best: f64 = 0.0;
        for mask in 0u32..(1 << d.len()) {
            let s: f64 = d.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, x)| x).sum();
            best = best.max(s.abs());
        }
        prop_assert!((v - best).abs() < 1e-12);
    }

    #[test]
    fn verdict_is_monotone_in_the_estimate(e in 0.0f64..1.0, de in 0.0f64..1.0, band in 0.0f64..0.1) {
        let rank = |v| match v {
            ContinuityVerdict::Continuous => 0,
            ContinuityVerdict::Inconclusive => 1,
            ContinuityVerdict::Discontinuous => 2,
        };
        let lo = ContinuityVerdict::judge(e, band, 0.1);
        let hi = ContinuityVerdict::judge(e + de, band, 0.1);
        prop_assert!(rank(lo) <= rank(hi));
    }
}

#[test]
fn tv_of_identical_and_disjoint_samples() {
    let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
    let k = empirical(pts);
    assert_eq!(tv_distance(&k, &k).unwrap().value, 0.0);
    let a = empirical(vec![vec![0.0]; 5]);
    let b = empirical(vec![vec![1.0]; 5]);
    assert_eq!(tv_distance(&a, &b).unwrap().value, 1.0);
}

#[test]
fn bl_of_nearby_point_masses() {
    let a = empirical(vec![vec![0.3]; 10]);
    let b = empirical(vec![vec![0.31]; 10]);
    let v = bl_distance(&a, &b, 256, 5).unwrap().value;
    // true distance min(1, 0.01); the dictionary recovers at least half
    assert!((0.005..=0.01 + 1e-12).contains(&v), "{v}");
    assert_eq!(bl_distance(&a, &a, 256, 5).unwrap().value, 0.0);
}

#[test]
fn delta_noise_keeps_tv_at_one_while_bl_vanishes() {
    let m = catalog_model("delta_noise_counterexample", &json!({})).unwrap();
    let phi = m.transition_map();
    let s2 = vec![0.0; phi.param_dim()];
    let mut u = vec![0.0; phi.param_dim()];
    u[0] = 1.0;
    let radii: Vec<f64> = (1..=6).map(|k| 0.5f64.powi(k)).collect();
    let p = continuity_profile(&phi, m.state_noise(), &s2, &radii, &[u], 200, 3).unwrap();
    for e in &p.entries {
        assert_eq!(e.tv_estimate, 1.0);
        assert!(e.bl_estimate <= e.radius + 1e-12);
    }
    assert_eq!(p.tv_verdict, ContinuityVerdict::Discontinuous);
    assert_eq!(p.bl_verdict, ContinuityVerdict::Continuous);
}

#[test]
fn zero_radius_gives_zero_estimates() {
    let m = catalog_model("additive_nonlinear", &json!({})).unwrap();
    let phi = m.transition_map();
    let s2 = vec![0.2; phi.param_dim()];
    let mut u = vec![0.0; phi.param_dim()];
    u[0] = 1.0;
    let p = continuity_profile(&phi, m.state_noise(), &s2, &[0.0], &[u], 500, 1).unwrap();
    assert_eq!(p.entries[0].tv_estimate, 0.0);
    assert_eq!(p.entries[0].bl_estimate, 0.0);
}

#[test]
fn additive_gaussian_tv_decreases_with_the_radius() {
    let phi = ParamMap::new("shift", 1, 1, 1, |s, w| vec![s[0] + w[0]]);
    let p = NoiseDistribution::standard_normal(1);
    let radii = [0.5, 0.25, 0.1, 0.05];
    let prof = continuity_profile(&phi, &p, &[0.0], &radii, &[vec![1.0]], 2000, 2).unwrap();
    let tv: Vec<f64> = prof.entries.iter().map(|e| e.tv_estimate).collect();
    assert!(tv.windows(2).all(|w| w[0] > w[1]), "{tv:?}");
    assert_eq!(prof.tv_verdict, ContinuityVerdict::Continuous);
}

#[test]
fn feller_modulus_vanishes_when_the_kernel_ignores_the_input() {
    let m = catalog_model("lssm", &json!({ "f1": 0.0, "f2": 0.0 })).unwrap();
    let r = feller_modulus(&m, &[0.3], &[0.1], &[0.5, 0.1], 32, 6, 2000, 4).unwrap();
    assert!(r.entries.iter().all(|e| e.modulus == 0.0), "{:?}", r.entries);
}

fn rotation() -> ParamMap {
    ParamMap::new("rotation", 1, 2, 2, |s, w| {
        let (c, n) = (s[0].cos(), s[0].sin());
        vec![c * w[0] - n * w[1], n * w[0] + c * w[1]]
    })
}

// Sutherland-Hodgman clip of a convex polygon against the square [-h, h]²
fn clip(poly: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let edges: [(usize, f64); 4] = [(0, h), (0, -h), (1, h), (1, -h)];
    let mut out = poly.to_vec();
    for (axis, bound) in edges {
        let inside = |p: &[f64; 2]| if bound > 0.0 { p[axis] <= bound } else { p[axis] >= bound };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (p, q) = (input[i], input[(i + 1) % input.len()]);
            if inside(&q) {
                if !inside(&p) {
                    out.push(cross(p, q, axis, bound));
                }
                out.push(q);
            } else if inside(&p) {
                out.push(cross(p, q, axis, bound));
            }
        }
    }
    out
}

fn cross(p: [f64; 2], q: [f64; 2], axis: usize, bound: f64) -> [f64; 2] {
    let t = (bound - p[axis]) / (q[axis] - p[axis]);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

fn area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1])
        .sum::<f64>()
        .abs()
        / 2.0
}

#[test]
fn rotated_square_matches_polygon_clipping() {
    let theta: f64 = 0.2;
    let k = SetShape::Box(BoxRegion::cube(2, -0.5, 0.5));
    let r = set_convergence_check(&rotation(), &k, &[0.0], &[theta], 400).unwrap();
    let corners: Vec<[f64; 2]> = [[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]]
        .iter()
        .map(|p| [theta.cos() * p[0] - theta.sin() * p[1], theta.sin() * p[0] + theta.cos() * p[1]])
        .collect();
    let overlap = area(&clip(&corners, 0.5));
    let symdiff = 2.0 * (1.0 - overlap);
    assert!((r.symdiff_measure - symdiff).abs() <= 0.02 * symdiff, "{} vs {symdiff}", r.symdiff_measure);
    // both squares are convex, so the Hausdorff distance is attained at a corner
    let hausdorff = corners
        .iter()
        .map(|c| {
            let dx = (c[0].abs() - 0.5).max(0.0);
            let dy = (c[1].abs() - 0.5).max(0.0);
            (dx * dx + dy * dy).sqrt()
        })
        .fold(0.0, f64::max);
    assert!((r.hausdorff_distance - hausdorff).abs() <= 0.02 * hausdorff, "{} vs {hausdorff}", r.hausdorff_distance);
}

#[test]
fn unmoved_set_has_zero_distances() {
    let k = SetShape::Ball {
        center: vec![0.0, 0.0],
        radius: 1.0,
    };
    let r = set_convergence_check(&rotation(), &k, &[0.3], &[0.3], 100).unwrap();
    assert_eq!(r.symdiff_measure, 0.0);
    assert_eq!(r.hausdorff_distance, 0.0);
}
