//! Convergence of image sets `φ(s2', K) → φ(s2, K)` in Hausdorff distance
//! and in the measure of the symmetric difference, for `dim ω ∈ {1, 2}`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::model::diffeo::{invert, newton_starts, NEWTON_STARTS};
use crate::model::ParamMap;
use crate::region::BoxRegion;

/// Fraction of near-image cells where Newton may fail before the check is
/// flagged inconclusive.
pub const FAILURE_THRESHOLD: f64 = 0.05;
const BISECTION_STEPS: usize = 40;

/// Compact set `K ⊂ Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetShape {
    Box(BoxRegion),
    Ball { center: Vec<f64>, radius: f64 },
}

impl SetShape {
    pub fn dim(&self) -> usize {
        match self {
            SetShape::Box(b) => b.dim(),
            SetShape::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        match self {
            SetShape::Box(b) => b.contains(w),
            SetShape::Ball { center, radius } => linalg::dist(w, center) <= *radius,
        }
    }

    pub fn bounding_box(&self) -> BoxRegion {
        match self {
            SetShape::Box(b) => b.clone(),
            SetShape::Ball { center, radius } => BoxRegion {
                low: center.iter().map(|c| c - radius).collect(),
                high: center.iter().map(|c| c + radius).collect(),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SetShape::Box(b) if b.is_degenerate() => Err(Error::invalid("K must have nonempty interior")),
            SetShape::Ball { radius, .. } if !(*radius > 0.0) || !radius.is_finite() => {
                Err(Error::invalid("ball radius must be positive"))
            }
            _ => Ok(()),
        }
    }

    // points of K used to bound the image: a lattice plus the boundary
    fn probe_points(&self) -> Vec<Vec<f64>> {
        let b = self.bounding_box();
        let res = if self.dim() == 1 { 401 } else { 121 };
        let mut pts: Vec<Vec<f64>> = b.closed_lattice(res).into_iter().filter(|w| self.contains(w)).collect();
        if let SetShape::Ball { center, radius } = self {
            if center.len() == 2 {
                for k in 0..720 {
                    let t = k as f64 * std::f64::consts::TAU / 720.0;
                    pts.push(vec![center[0] + radius * t.cos(), center[1] + radius * t.sin()]);
                }
            }
        }
        pts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetConvergenceReport {
    pub hausdorff_distance: f64,
    pub symdiff_measure: f64,
    /// Cells per axis of the raster.
    pub resolution: Vec<usize>,
    pub raster_box: BoxRegion,
    pub cell_volume: f64,
    /// Raster measures of `φ(s2, K)` and `φ(s2', K)`.
    pub measure_base: f64,
    pub measure_moved: f64,
    pub boundary_points: [usize; 2],
    pub inversion_failures: usize,
    pub failure_fraction: f64,
    pub inconclusive: bool,
}

struct Raster {
    lo: Vec<f64>,
    h: Vec<f64>,
    n: Vec<usize>,
}

impl Raster {
    fn len(&self) -> usize {
        self.n.iter().product()
    }

    fn center(&self, k: usize) -> Vec<f64> {
        let mut idx = vec![0; self.n.len()];
        let mut r = k;
        for j in (0..self.n.len()).rev() {
            idx[j] = r % self.n[j];
            r /= self.n[j];
        }
        (0..self.n.len()).map(|j| self.lo[j] + (idx[j] as f64 + 0.5) * self.h[j]).collect()
    }

    // neighbor of cell k one step forward along axis j
    fn forward(&self, k: usize, j: usize) -> Option<usize> {
        let stride: usize = self.n[j + 1..].iter().product();
        let i = (k / stride) % self.n[j];
        (i + 1 < self.n[j]).then_some(k + stride)
    }

    fn neighbors(&self, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for j in 0..self.n.len() {
            let stride: usize = self.n[j + 1..].iter().product();
            let i = (k / stride) % self.n[j];
            if i > 0 {
                out.push(k - stride);
            }
            if i + 1 < self.n[j] {
                out.push(k + stride);
            }
        }
        out
    }
}

struct Membership<'a> {
    phi: &'a ParamMap,
    k: &'a SetShape,
    s2: Vec<f64>,
    domain: BoxRegion,
    starts: Vec<Vec<f64>>,
}

#[derive(Clone)]
struct Cell {
    member: bool,
    failed: bool,
    preimage: Option<Vec<f64>>,
}

impl Membership<'_> {
    fn test(&self, y: &[f64], warm: Option<&[f64]>) -> Cell {
        if let Some(w) = warm {
            let inv = invert(self.phi, &self.s2, y, &self.domain, Some(std::slice::from_ref(&w.to_vec())));
            if inv.converged {
                return self.cell(inv.omega);
            }
        }
        let inv = invert(self.phi, &self.s2, y, &self.domain, Some(&self.starts));
        let failed = !inv.converged;
        Cell {
            failed,
            ..self.cell(inv.omega)
        }
    }

    fn cell(&self, omega: Option<Vec<f64>>) -> Cell {
        let member = omega.as_ref().is_some_and(|w| self.k.contains(w));
        Cell {
            member,
            failed: false,
            preimage: omega,
        }
    }

    fn rasterize(&self, r: &Raster) -> Vec<Cell> {
        let row = *r.n.last().unwrap();
        let rows = r.len() / row;
        (0..rows)
            .into_par_iter()
            .flat_map_iter(|ri| {
                let mut warm: Option<Vec<f64>> = None;
                let mut out = Vec::with_capacity(row);
                for i in 0..row {
                    let c = self.test(&r.center(ri * row + i), warm.as_deref());
                    if c.preimage.is_some() {
                        warm = c.preimage.clone();
                    }
                    out.push(c);
                }
                out
            })
            .collect()
    }

    /// Boundary crossings between adjacent cells of different membership,
    /// located by bisection.
    fn boundary(&self, r: &Raster, cells: &[Cell]) -> Vec<Vec<f64>> {
        let pairs: Vec<(usize, usize)> = (0..r.len())
            .flat_map(|k| (0..r.n.len()).filter_map(move |j| r.forward(k, j).map(|m| (k, m))))
            .filter(|&(k, m)| cells[k].member != cells[m].member)
            .collect();
        pairs
            .par_iter()
            .map(|&(k, m)| {
                let (inside, outside) = if cells[k].member { (k, m) } else { (m, k) };
                let mut a = r.center(inside);
                let mut b = r.center(outside);
                let mut warm = cells[inside].preimage.clone();
                for _ in 0..BISECTION_STEPS {
                    let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                    let c = self.test(&mid, warm.as_deref());
                    if c.member {
                        a = mid;
                        warm = c.preimage;
                    } else {
                        b = mid;
                    }
                }
                a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect()
            })
            .collect()
    }
}

/// Uniform-bucket nearest-neighbor index for points in 1 or 2 dimensions.
struct PointIndex<'a> {
    pts: &'a [Vec<f64>],
    lo: Vec<f64>,
    size: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    span: i64,
}

impl<'a> PointIndex<'a> {
    fn new(pts: &'a [Vec<f64>], lo: Vec<f64>, size: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut idx = Self {
            pts,
            lo,
            size,
            buckets: HashMap::new(),
            span: 0,
        };
        let mut span = 0;
        for (i, p) in pts.iter().enumerate() {
            let key = idx.key(p);
            span = span.max(key.0.abs()).max(key.1.abs());
            buckets.entry(key).or_default().push(i);
        }
        idx.buckets = buckets;
        idx.span = span;
        idx
    }

    fn key(&self, p: &[f64]) -> (i64, i64) {
        let k = |j: usize| ((p[j] - self.lo[j]) / self.size).floor() as i64;
        (k(0), if p.len() > 1 { k(1) } else { 0 })
    }

    /// The `k` nearest points as `(distance, index)`, closest first.
    fn nearest(&self, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let (qi, qj) = self.key(q);
        let two_d = q.len() > 1;
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let max_ring = self.span + qi.abs().max(qj.abs()) + 2;
        for ring in 0..=max_ring {
            let lim = if two_d { ring } else { 0 };
            for di in -ring..=ring {
                for dj in -lim..=lim {
                    if di.abs().max(dj.abs()) != ring {
                        continue;
                    }
                    if let Some(v) = self.buckets.get(&(qi + di, qj + dj)) {
                        for &i in v {
                            let d = linalg::dist(q, &self.pts[i]);
                            if best.len() < k || d < best[best.len() - 1].0 {
                                let pos = best.partition_point(|e| e.0 <= d);
                                best.insert(pos, (d, i));
                                best.truncate(k);
                            }
                        }
                    }
                }
            }
            if best.len() == k.min(self.pts.len()) && best.last().is_some_and(|e| e.0 <= ring as f64 * self.size) {
                break;
            }
        }
        best
    }

    /// Distance to the boundary curve: the nearest sample, or any short
    /// chord between nearby samples.
    fn curve_distance(&self, q: &[f64], spacing: f64) -> f64 {
        let near = self.nearest(q, 6);
        let mut d = near.first().map_or(f64::INFINITY, |e| e.0);
        if q.len() < 2 {
            return d;
        }
        for (x, &(_, i)) in near.iter().enumerate() {
            for &(_, j) in &near[x + 1..] {
                let (a, b) = (&self.pts[i], &self.pts[j]);
                if linalg::dist(a, b) > spacing {
                    continue;
                }
                let ab: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
                let aq: Vec<f64> = q.iter().zip(a).map(|(x, y)| x - y).collect();
                let t = (linalg::dot(&aq, &ab) / linalg::dot(&ab, &ab)).clamp(0.0, 1.0);
                let p: Vec<f64> = a.iter().zip(&ab).map(|(x, v)| x + t * v).collect();
                d = d.min(linalg::dist(q, &p));
            }
        }
        d
    }
}

// sup over points of `from` outside `to` of the distance to ∂to
fn directed(from: &[Vec<f64>], in_to: &[bool], to_boundary: &PointIndex, spacing: f64) -> f64 {
    from.par_iter()
        .zip(in_to.par_iter())
        .filter(|(_, inside)| !**inside)
        .map(|(p, _)| to_boundary.curve_distance(p, spacing))
        .reduce(|| 0.0, f64::max)
}

/// Rasterizes `φ(s2, K)` and `φ(s2', K)` with `resolution` cells per axis
/// and compares them.
pub fn set_convergence_check(
    phi: &ParamMap,
    k: &SetShape,
    s2: &[f64],
    s2_prime: &[f64],
    resolution: usize,
) -> Result<SetConvergenceReport> {
    let n = phi.noise_dim();
    if !(1..=2).contains(&n) || phi.out_dim() != n {
        return Err(Error::Unsupported("set convergence needs dim φ = dim ω ∈ {1, 2}".into()));
    }
    check_dim("K", n, k.dim())?;
    check_dim("map parameter", phi.param_dim(), s2.len())?;
    check_dim("map parameter", phi.param_dim(), s2_prime.len())?;
    k.validate()?;
    if resolution < 4 {
        return Err(Error::invalid("resolution must be at least 4"));
    }

    // raster box: image extents of both sets, padded
    let probes = k.probe_points();
    let mut low = vec![f64::INFINITY; n];
    let mut high = vec![f64::NEG_INFINITY; n];
    for s in [s2, s2_prime] {
        for w in &probes {
            let y = phi.eval(s, w)?;
            for j in 0..n {
                low[j] = low[j].min(y[j]);
                high[j] = high[j].max(y[j]);
            }
        }
    }
    let ext = BoxRegion::new(low, high)?;
    let pad: Vec<f64> = (0..n).map(|j| 0.02 * ext.width(j).max(1e-6)).collect();
    let lo: Vec<f64> = (0..n).map(|j| ext.low[j] - pad[j]).collect();
    let hi: Vec<f64> = (0..n).map(|j| ext.high[j] + pad[j]).collect();
    let raster = Raster {
        h: (0..n).map(|j| (hi[j] - lo[j]) / resolution as f64).collect(),
        lo: lo.clone(),
        n: vec![resolution; n],
    };
    let cell_volume: f64 = raster.h.iter().product();

    let domain = k.bounding_box().scaled(1.5);
    let starts = newton_starts(&domain, NEWTON_STARTS);
    let mem = |s: &[f64]| Membership {
        phi,
        k,
        s2: s.to_vec(),
        domain: domain.clone(),
        starts: starts.clone(),
    };
    let (ma, mb) = (mem(s2), mem(s2_prime));
    let (ca, cb) = (ma.rasterize(&raster), mb.rasterize(&raster));

    let count = |c: &[Cell]| c.iter().filter(|c| c.member).count();
    let (na, nb) = (count(&ca), count(&cb));
    if na == 0 || nb == 0 {
        return Err(Error::invalid("an image set has no raster cell; increase the resolution"));
    }
    let sym = ca.iter().zip(&cb).filter(|(a, b)| a.member != b.member).count();

    // Newton failures only matter next to the image
    let mut failures = 0;
    let mut near = 0;
    for cells in [&ca, &cb] {
        for kk in 0..raster.len() {
            let adjacent = cells[kk].member || raster.neighbors(kk).iter().any(|&m| cells[m].member);
            if adjacent {
                near += 1;
                if cells[kk].failed {
                    failures += 1;
                }
            }
        }
    }
    let failure_fraction = failures as f64 / near.max(1) as f64;

    let ba = ma.boundary(&raster, &ca);
    let bb = mb.boundary(&raster, &cb);
    let bucket = 4.0 * raster.h.iter().cloned().fold(0.0, f64::max);
    let ia = PointIndex::new(&ba, lo.clone(), bucket);
    let ib = PointIndex::new(&bb, lo.clone(), bucket);

    // member cell centers plus refined boundary points of each set, with
    // their membership in the other set
    let gather = |own: &[Cell], other: &[Cell], bnd: &[Vec<f64>], other_mem: &Membership| {
        let mut pts = Vec::new();
        let mut inside = Vec::new();
        for kk in 0..raster.len() {
            if own[kk].member {
                pts.push(raster.center(kk));
                inside.push(other[kk].member);
            }
        }
        let flags: Vec<bool> = bnd.par_iter().map(|p| other_mem.test(p, None).member).collect();
        pts.extend(bnd.iter().cloned());
        inside.extend(flags);
        (pts, inside)
    };
    let (pa, ina) = gather(&ca, &cb, &ba, &mb);
    let (pb, inb) = gather(&cb, &ca, &bb, &ma);
    let hausdorff = if sym == 0 && ina.iter().all(|v| *v) && inb.iter().all(|v| *v) {
        0.0
    } else {
        let spacing = 2.0 * linalg::norm(&raster.h);
        let dab = if bb.is_empty() { 0.0 } else { directed(&pa, &ina, &ib, spacing) };
        let dba = if ba.is_empty() { 0.0 } else { directed(&pb, &inb, &ia, spacing) };
        dab.max(dba)
    };

    Ok(SetConvergenceReport {
        hausdorff_distance: hausdorff,
        symdiff_measure: sym as f64 * cell_volume,
        resolution: raster.n.clone(),
        raster_box: BoxRegion { low: lo, high: hi },
        cell_volume,
        measure_base: na as f64 * cell_volume,
        measure_moved: nb as f64 * cell_volume,
        boundary_points: [ba.len(), bb.len()],
        inversion_failures: failures,
        failure_fraction,
        inconclusive: failure_fraction > FAILURE_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_interval() {
        let phi = ParamMap::new("shift", 1, 1, 1, |s, w| vec![s[0] + w[0]]);
        let k = SetShape::Box(BoxRegion::new(vec![0.0], vec![1.0]).unwrap());
        let r = set_convergence_check(&phi, &k, &[0.0], &[0.25], 400).unwrap();
        assert!((r.hausdorff_distance - 0.25).abs() < 1e-6, "{r:?}");
        assert!((r.symdiff_measure - 0.5).abs() < 0.01, "{r:?}");
        let z = set_convergence_check(&phi, &k, &[0.3], &[0.3], 400).unwrap();
        assert_eq!(z.hausdorff_distance, 0.0);
        assert_eq!(z.symdiff_measure, 0.0);
    }

    #[test]
    fn nearest_neighbor_index_matches_brute_force() {
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.0314;
                vec![t.cos() * (1.0 + 0.1 * (3.0 * t).sin()), t.sin()]
            })
            .collect();
        let idx = PointIndex::new(&pts, vec![-2.0, -2.0], 0.05);
        for q in [[0.0, 0.0], [1.5, -1.7], [-0.3, 0.95], [3.0, 3.0]] {
            let brute = pts.iter().map(|p| linalg::dist(&q, p)).fold(f64::INFINITY, f64::min);
            assert!((idx.nearest(&q, 3)[0].0 - brute).abs() < 1e-15);
        }
    }
}
