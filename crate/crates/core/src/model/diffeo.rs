//! Numerical probe of the Diffeomorphic Condition for `ω ↦ φ(s2, ω)`:
//! continuity of φ and `D_ω φ`, nonsingular Jacobian, injectivity.
//!
//! Also hosts the damped Newton inversion shared by the density and
//! set-convergence code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::map::ParamMap;
use crate::error::{check_dim, Error, Result, Witness};
use crate::linalg;
use crate::region::BoxRegion;
use crate::rng;

pub const NEWTON_STARTS: usize = 8;
pub const NEWTON_MAX_ITER: usize = 50;
pub const NEWTON_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;
const BISECTION_STEPS: usize = 10;

/// Outcome of a Newton solve for `φ(s2, ω) = target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    /// Preimage, when some start converged inside the domain.
    pub omega: Option<Vec<f64>>,
    /// Iterations used by the successful start (or by all starts on failure).
    pub iterations: usize,
    pub starts_tried: usize,
    pub residual: f64,
    /// Some start converged (possibly to a point outside the domain);
    /// `false` means Newton failed from every start.
    pub converged: bool,
}

/// `count` deterministic starting points spread over `b`: the center,
/// then a Halton sequence.
pub fn newton_starts(b: &BoxRegion, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let mut out = vec![b.center()];
    let mut k = 1u64;
    while out.len() < count {
        let p: Vec<f64> = (0..b.dim())
            .map(|j| {
                let u = radical_inverse(k, PRIMES[j % PRIMES.len()]);
                b.low[j] + b.width(j) * u
            })
            .collect();
        out.push(p);
        k += 1;
    }
    out
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / base as f64);
    while k > 0 {
        inv += (k % base) as f64 * f;
        k /= base;
        f /= base as f64;
    }
    inv
}

fn residual_norm(phi: &ParamMap, s2: &[f64], w: &[f64], target: &[f64]) -> Option<f64> {
    let y = phi.call(s2, w);
    if y.len() != target.len() || y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(linalg::dist(&y, target))
}

/// One damped-Newton run from `start`. Returns the final point, iterations
/// and residual when the step size fell below the tolerance.
pub fn newton_from(
    phi: &ParamMap,
    s2: &[f64],
    target: &[f64],
    start: &[f64],
) -> (Option<Vec<f64>>, usize, f64) {
    let mut w = start.to_vec();
    let Some(mut res) = residual_norm(phi, s2, &w, target) else {
        return (None, 0, f64::INFINITY);
    };
    for it in 1..=NEWTON_MAX_ITER {
        let jac = match phi.jacobian(s2, &w) {
            Ok(j) => j,
            Err(_) => return (None, it, res),
        };
        let y = phi.call(s2, &w);
        let r = DVector::from_iterator(y.len(), y.iter().zip(target).map(|(a, b)| a - b));
        let Some(step) = jac.lu().solve(&r) else {
            return (None, it, res);
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if let Some(rn) = residual_norm(phi, s2, &trial, target) {
                if rn < res || rn == 0.0 {
                    accepted = Some((trial, rn));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, rn)) = accepted else {
            // no decrease along the Newton direction: either converged to
            // rounding level or stuck
            let scale = 1.0 + linalg::norm(target);
            let done = res <= 1e-9 * scale;
            return (done.then_some(w), it, res);
        };
        let moved = linalg::dist(&next, &w);
        let wscale = 1.0 + linalg::norm(&next);
        w = next;
        res = rn;
        if moved <= NEWTON_TOL * wscale {
            let scale = 1.0 + linalg::norm(target);
            return ((res <= 1e-8 * scale).then_some(w), it, res);
        }
    }
    (None, NEWTON_MAX_ITER, res)
}

/// Solves `φ(s2, ω) = target` for `ω` inside `domain` using damped Newton
/// from the given starts (or [`newton_starts`] over the domain). The first
/// converged start decides: a preimage outside `domain` counts as none.
pub fn invert(
    phi: &ParamMap,
    s2: &[f64],
    target: &[f64],
    domain: &BoxRegion,
    starts: Option<&[Vec<f64>]>,
) -> Inversion {
    let default_starts;
    let starts = match starts {
        Some(s) => s,
        None => {
            default_starts = newton_starts(domain, NEWTON_STARTS);
            &default_starts
        }
    };
    let mut total_iter = 0;
    let mut best = f64::INFINITY;
    for (k, s) in starts.iter().enumerate() {
        let (w, it, res) = newton_from(phi, s2, target, s);
        total_iter += it;
        best = best.min(res);
        if let Some(w) = w {
            // an exact preimage outside the domain rules out one inside
            // when φ(s2, ·) is injective
            let inside = domain.contains_open(&w);
            return Inversion {
                omega: inside.then_some(w),
                iterations: total_iter,
                starts_tried: k + 1,
                residual: res,
                converged: true,
            };
        }
    }
    Inversion {
        omega: None,
        iterations: total_iter,
        starts_tried: starts.len(),
        residual: best,
        converged: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffeoTolerances {
    pub singularity_tol: f64,
    pub collision_tol: f64,
    pub min_preimage_sep: f64,
    /// Injectivity probe pairs per parameter value; `None` means `grid_res²`.
    pub n_pairs: Option<usize>,
    /// Differences below this are never treated as jumps.
    pub jump_floor: f64,
    pub seed: u64,
}

impl Default for DiffeoTolerances {
    fn default() -> Self {
        Self {
            singularity_tol: 1e-8,
            collision_tol: 1e-9,
            min_preimage_sep: 1e-3,
            n_pairs: None,
            jump_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffeoReport {
    pub grid_points_checked: usize,
    pub min_abs_jacobian_det: f64,
    pub injectivity_collisions: usize,
    pub injectivity_probes: usize,
    /// Probes where Newton did not converge from the partner point.
    pub unresolved_probes: usize,
    /// `true` when injectivity was inferred from a sign-definite scalar
    /// derivative instead of pair probes.
    pub injectivity_by_monotonicity: bool,
    pub continuity_violations: usize,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    pub note: String,
}

const SCOPE_NOTE: &str =
    "continuity, nonsingularity and injectivity are only checked on the probed boxes";

/// Probes the Diffeomorphic Condition for `φ` on `param_box × omega_box`.
pub fn check_diffeomorphic(
    phi: &ParamMap,
    param_box: &BoxRegion,
    omega_box: &BoxRegion,
    grid_res: usize,
    tol: &DiffeoTolerances,
) -> Result<DiffeoReport> {
    if grid_res < 2 {
        return Err(Error::invalid("grid_res must be at least 2"));
    }
    check_dim("parameter box", phi.param_dim(), param_box.dim())?;
    check_dim("noise box", phi.noise_dim(), omega_box.dim())?;
    if param_box.is_degenerate() || omega_box.is_degenerate() {
        return Err(Error::invalid("parameter and noise boxes must be nondegenerate"));
    }
    if phi.out_dim() != phi.noise_dim() {
        return Err(Error::invalid(format!(
            "{}: Jacobian is {}x{}, not square",
            phi.label(),
            phi.out_dim(),
            phi.noise_dim()
        )));
    }
    let params = param_box.closed_lattice(grid_res);
    let omegas = omega_box.interior_lattice(grid_res);
    let n = phi.noise_dim();
    let n_pairs = tol.n_pairs.unwrap_or(grid_res * grid_res);

    let per_param: Vec<std::result::Result<SliceResult, Witness>> = params
        .par_iter()
        .enumerate()
        .map(|(k, s2)| probe_slice(phi, s2, &omegas, omega_box, n_pairs, tol, k as u64))
        .collect();

    let mut report = DiffeoReport {
        grid_points_checked: params.len() * omegas.len(),
        min_abs_jacobian_det: f64::INFINITY,
        injectivity_collisions: 0,
        injectivity_probes: 0,
        unresolved_probes: 0,
        injectivity_by_monotonicity: n == 1,
        continuity_violations: 0,
        verdict: Verdict::Pass,
        witnesses: Vec::new(),
        note: SCOPE_NOTE.to_string(),
    };
    let mut failed = false;
    for r in per_param {
        match r {
            Err(w) => {
                failed = true;
                report.witnesses.push(w);
            }
            Ok(s) => {
                if s.min_det < report.min_abs_jacobian_det {
                    report.min_abs_jacobian_det = s.min_det;
                }
                report.injectivity_collisions += s.collisions;
                report.injectivity_probes += s.probes;
                report.unresolved_probes += s.unresolved;
                report.continuity_violations += s.jumps;
                failed |= s.sign_change;
                report.witnesses.extend(s.witnesses);
            }
        }
    }
    let jumps = continuity_probe(phi, param_box, omega_box, grid_res, tol)?;
    report.continuity_violations += jumps.len();
    report.witnesses.extend(jumps);

    failed |= report.min_abs_jacobian_det <= tol.singularity_tol
        || report.injectivity_collisions > 0
        || report.continuity_violations > 0;
    report.verdict = if failed {
        Verdict::Fail
    } else if report.unresolved_probes > 0 {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    // keep reports small
    report.witnesses.truncate(32);
    Ok(report)
}

struct SliceResult {
    min_det: f64,
    sign_change: bool,
    collisions: usize,
    probes: usize,
    unresolved: usize,
    jumps: usize,
    witnesses: Vec<Witness>,
}

fn probe_slice(
    phi: &ParamMap,
    s2: &[f64],
    omegas: &[Vec<f64>],
    omega_box: &BoxRegion,
    n_pairs: usize,
    tol: &DiffeoTolerances,
    index: u64,
) -> std::result::Result<SliceResult, Witness> {
    let mut out = SliceResult {
        min_det: f64::INFINITY,
        sign_change: false,
        collisions: 0,
        probes: 0,
        unresolved: 0,
        jumps: 0,
        witnesses: Vec::new(),
    };
    let mut sign = 0.0f64;
    for w in omegas {
        let jac = phi.jacobian(s2, w).map_err(witness_of)?;
        let det = linalg::det(&jac);
        if det.abs() < out.min_det {
            out.min_det = det.abs();
            if det.abs() <= tol.singularity_tol {
                out.witnesses.push(Witness {
                    param: s2.to_vec(),
                    point: w.clone(),
                    detail: format!("|det D_ω φ| = {:e}", det.abs()),
                });
            }
        }
        if det != 0.0 {
            if sign != 0.0 && det.signum() != sign && !out.sign_change {
                out.sign_change = true;
                out.witnesses.push(Witness {
                    param: s2.to_vec(),
                    point: w.clone(),
                    detail: "Jacobian determinant changes sign".into(),
                });
            }
            sign = det.signum();
        }
    }
    if phi.noise_dim() == 1 || out.min_det <= tol.singularity_tol {
        return Ok(out);
    }

    let mut r = rng::stream(rng::derive(tol.seed, 0xD1FF), index);
    let draw = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..omega_box.dim())
            .map(|j| omega_box.low[j] + omega_box.width(j) * r.random::<f64>())
            .collect()
    };
    for _ in 0..n_pairs {
        let wi = draw(&mut r);
        let wj = draw(&mut r);
        out.probes += 1;
        let yi = phi.eval(s2, &wi).map_err(witness_of)?;
        let yj = phi.eval(s2, &wj).map_err(witness_of)?;
        let scale = 1.0 + linalg::norm(&yi);
        if linalg::dist(&yi, &yj) < tol.collision_tol * scale
            && linalg::dist(&wi, &wj) > tol.min_preimage_sep
        {
            out.collisions += 1;
            out.witnesses.push(collision(s2, &wi, &wj));
            continue;
        }
        // search for a second preimage of φ(s2, ω_i) starting from ω_j
        let (sol, _, res) = newton_from(phi, s2, &yi, &wj);
        match sol {
            Some(w) if omega_box.contains_open(&w) => {
                if linalg::dist(&w, &wi) > tol.min_preimage_sep && res < tol.collision_tol * scale {
                    out.collisions += 1;
                    out.witnesses.push(collision(s2, &wi, &w));
                }
            }
            Some(_) => {}
            None => out.unresolved += 1,
        }
    }
    let _ = &mut out.jumps;
    Ok(out)
}

fn collision(s2: &[f64], a: &[f64], b: &[f64]) -> Witness {
    Witness {
        param: s2.to_vec(),
        point: a.to_vec(),
        detail: format!("same image as ω' = {b:?}"),
    }
}

fn witness_of(e: Error) -> Witness {
    match e {
        Error::Evaluation(w) | Error::SingularJacobian(w) => w,
        other => Witness {
            param: vec![],
            point: vec![],
            detail: other.to_string(),
        },
    }
}

/// Joint continuity probe of `φ` and `D_ω φ` over the product lattice:
/// each edge between neighbouring nodes is bisected toward the larger
/// difference; a difference that does not shrink is reported as a jump.
fn continuity_probe(
    phi: &ParamMap,
    param_box: &BoxRegion,
    omega_box: &BoxRegion,
    grid_res: usize,
    tol: &DiffeoTolerances,
) -> Result<Vec<Witness>> {
    let p = phi.param_dim();
    // the ω lattice is interior; put both on one joint box
    let mut low = param_box.low.clone();
    let mut high = param_box.high.clone();
    for j in 0..omega_box.dim() {
        let h = omega_box.width(j) / (grid_res + 1) as f64;
        low.push(omega_box.low[j] + h);
        high.push(omega_box.high[j] - h);
    }
    let joint = BoxRegion::new(low, high)?;
    let nodes = joint.closed_lattice(grid_res);
    let dim = joint.dim();
    let eval = move |z: &[f64]| -> Option<(Vec<f64>, DMatrix<f64>)> {
        let y = phi.eval(&z[..p], &z[p..]).ok()?;
        let j = phi.jacobian(&z[..p], &z[p..]).ok()?;
        Some((y, j))
    };
    let gap = |a: &(Vec<f64>, DMatrix<f64>), b: &(Vec<f64>, DMatrix<f64>)| -> (f64, f64) {
        (linalg::dist(&a.0, &b.0), (&a.1 - &b.1).amax())
    };
    let found: Vec<Witness> = nodes
        .par_iter()
        .flat_map_iter(|z| {
            let mut local = Vec::new();
            for axis in 0..dim {
                let step = joint.width(axis) / (grid_res - 1) as f64;
                if z[axis] + 0.5 * step > joint.high[axis] {
                    continue;
                }
                let mut q = z.clone();
                q[axis] += step;
                let (Some(fa), Some(fb)) = (eval(z), eval(&q)) else {
                    continue;
                };
                let (d0v, d0j) = gap(&fa, &fb);
                for (which, d0) in [(0usize, d0v), (1, d0j)] {
                    if d0 <= tol.jump_floor {
                        continue;
                    }
                    let (mut lo, mut hi) = (z.clone(), q.clone());
                    let (mut flo, mut fhi) = (fa.clone(), fb.clone());
                    let mut d = d0;
                    for _ in 0..BISECTION_STEPS {
                        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                        let Some(fm) = eval(&mid) else { break };
                        let left = pick(gap(&flo, &fm), which);
                        let right = pick(gap(&fm, &fhi), which);
                        if left >= right {
                            hi = mid;
                            fhi = fm;
                            d = left;
                        } else {
                            lo = mid;
                            flo = fm;
                            d = right;
                        }
                    }
                    if d > 0.1 * d0 && d > tol.jump_floor {
                        local.push(Witness {
                            param: lo[..p].to_vec(),
                            point: lo[p..].to_vec(),
                            detail: format!(
                                "{} jumps by {d:e} along axis {axis}",
                                if which == 0 { "φ" } else { "D_ω φ" }
                            ),
                        });
                    }
                }
            }
            local
        })
        .collect();
    Ok(found)
}

#[inline]
fn pick(g: (f64, f64), which: usize) -> f64 {
    if which == 0 {
        g.0
    } else {
        g.1
    }
}

/// Per-coordinate range of `φ(s2, ·)` over an interior lattice of `omega_box`.
pub fn image_extent(phi: &ParamMap, s2: &[f64], omega_box: &BoxRegion, res: usize) -> Result<BoxRegion> {
    let mut low = vec![f64::INFINITY; phi.out_dim()];
    let mut high = vec![f64::NEG_INFINITY; phi.out_dim()];
    for w in omega_box.closed_lattice(res) {
        let y = phi.eval(s2, &w)?;
        for j in 0..y.len() {
            low[j] = low[j].min(y[j]);
            high[j] = high[j].max(y[j]);
        }
    }
    Ok(BoxRegion { low, high })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize) -> BoxRegion {
        BoxRegion::cube(dim, -1.0, 1.0)
    }

    #[test]
    fn additive_map_passes_with_unit_determinant() {
        let phi = ParamMap::new("add", 1, 2, 2, |s, w| vec![s[0].sin() + w[0], s[0] * s[0] + w[1]])
            .with_jacobian(|_, _| DMatrix::identity(2, 2));
        let r = check_diffeomorphic(&phi, &unit(1), &unit(2), 5, &Default::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert_eq!(r.min_abs_jacobian_det, 1.0);
        assert!(r.injectivity_probes > 0);
    }

    #[test]
    fn rank_deficient_map_fails() {
        let phi = ParamMap::new("sum", 1, 2, 2, |_, w| vec![w[0] + w[1], w[0] + w[1]]);
        let r = check_diffeomorphic(&phi, &unit(1), &unit(2), 4, &Default::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.min_abs_jacobian_det <= 1e-8);
        assert!(!r.witnesses.is_empty());
    }

    #[test]
    fn non_injective_map_fails() {
        // ω ↦ ω² on (-1, 1) folds at 0
        let phi = ParamMap::new("fold", 1, 1, 1, |s, w| vec![s[0] + w[0] * w[0]]);
        let r = check_diffeomorphic(&phi, &unit(1), &unit(1), 6, &Default::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn jump_in_parameter_is_a_continuity_violation() {
        let phi = ParamMap::new("step", 1, 1, 1, |s, w| vec![w[0] + if s[0] > 0.1 { 1.0 } else { 0.0 }]);
        let r = check_diffeomorphic(&phi, &unit(1), &unit(1), 5, &Default::default()).unwrap();
        assert!(r.continuity_violations > 0);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn rejects_bad_arguments() {
        let phi = ParamMap::new("id", 1, 1, 1, |_, w| w.to_vec());
        assert!(check_diffeomorphic(&phi, &unit(1), &unit(1), 1, &Default::default()).is_err());
        let flat = BoxRegion::new(vec![0.0], vec![0.0]).unwrap();
        assert!(check_diffeomorphic(&phi, &flat, &unit(1), 3, &Default::default()).is_err());
    }

    #[test]
    fn newton_finds_preimage_and_reports_outside_image() {
        let phi = ParamMap::new("atan", 0, 1, 1, |_, w| vec![w[0].atan()]);
        let dom = BoxRegion::cube(1, -50.0, 50.0);
        let inv = invert(&phi, &[], &[0.5], &dom, None);
        let w = inv.omega.unwrap();
        assert!((w[0] - 0.5f64.tan()).abs() < 1e-9);
        assert!(invert(&phi, &[], &[2.0], &dom, None).omega.is_none());
    }

    #[test]
    fn halton_starts_stay_in_box() {
        let b = BoxRegion::new(vec![0.0, 2.0], vec![1.0, 5.0]).unwrap();
        let s = newton_starts(&b, 8);
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], vec![0.5, 3.5]);
        assert!(s.iter().all(|p| b.contains(p)));
    }
}
