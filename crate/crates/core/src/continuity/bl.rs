//! Bounded-Lipschitz distance over a finite, seeded dictionary of test
//! functions with `sup|f| ≤ 1` and `Lip(f) ≤ 1`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{KernelEstimate, KernelRepr};
use crate::linalg;
use crate::region::BoxRegion;
use crate::rng;

pub const DEFAULT_DICTIONARY_SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `f ≡ 1`.
    Constant,
    /// `clamp(x_axis − center, −1, 1)`.
    Coordinate { axis: usize, center: f64 },
    /// `clamp(w·x − b, 0, 1)` with `|w| = 1`.
    Ramp { w: Vec<f64>, b: f64 },
    /// `max(0, 1 − |w·x − b|)` with `|w| = 1`.
    Tent { w: Vec<f64>, b: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant => 1.0,
            TestFunction::Coordinate { axis, center } => (x[*axis] - center).clamp(-1.0, 1.0),
            TestFunction::Ramp { w, b } => (linalg::dot(w, x) - b).clamp(0.0, 1.0),
            TestFunction::Tent { w, b } => (1.0 - (linalg::dot(w, x) - b).abs()).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub seed: u64,
    pub functions: Vec<TestFunction>,
}

impl Dictionary {
    /// Constant, one centered coordinate map per axis, then random ramps and
    /// tents whose offsets cover the projection of `range`.
    pub fn build(range: &BoxRegion, size: usize, seed: u64) -> Self {
        let d = range.dim();
        let center = range.center();
        let mut functions = vec![TestFunction::Constant];
        for (axis, &c) in center.iter().enumerate() {
            functions.push(TestFunction::Coordinate { axis, center: c });
        }
        let mut r = rng::stream(seed, 0);
        let mut k = 0;
        while functions.len() < size {
            let mut w: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            let n = linalg::norm(&w);
            if !(n > 1e-12) {
                continue;
            }
            w.iter_mut().for_each(|v| *v /= n);
            // projection range of the box onto w
            let (mut lo, mut hi) = (0.0, 0.0);
            for j in 0..d {
                let (a, b) = (w[j] * range.low[j], w[j] * range.high[j]);
                lo += a.min(b);
                hi += a.max(b);
            }
            let u: f64 = r.random();
            if k % 2 == 0 {
                let b = lo - 1.0 + u * (hi - lo + 1.0);
                functions.push(TestFunction::Ramp { w, b });
            } else {
                let b = lo - 0.5 + u * (hi - lo + 1.0);
                functions.push(TestFunction::Tent { w, b });
            }
            k += 1;
        }
        functions.truncate(size.max(1));
        Self { seed, functions }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlEstimate {
    pub value: f64,
    pub band: f64,
    /// Index of the maximizing test function.
    pub argmax: usize,
    /// Paired band: both kernels empirical with the same seed and size.
    pub paired: bool,
    pub dictionary: Dictionary,
}

/// Bounding box of the positive-mass atoms of both kernels.
pub fn pooled_range(k1: &KernelEstimate, k2: &KernelEstimate) -> Result<BoxRegion> {
    let d = k1.dim;
    let mut low = vec![f64::INFINITY; d];
    let mut high = vec![f64::NEG_INFINITY; d];
    for k in [k1, k2] {
        for (p, m) in k.atoms() {
            if m > 0.0 {
                for j in 0..d {
                    low[j] = low[j].min(p[j]);
                    high[j] = high[j].max(p[j]);
                }
            }
        }
    }
    if low.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("kernel has no mass"));
    }
    BoxRegion::new(low, high)
}

pub fn bl_distance(k1: &KernelEstimate, k2: &KernelEstimate, dictionary_size: usize, seed: u64) -> Result<BlEstimate> {
    check_dim("kernel", k1.dim, k2.dim)?;
    if dictionary_size == 0 {
        return Err(Error::invalid("dictionary_size must be at least 1"));
    }
    let dict = Dictionary::build(&pooled_range(k1, k2)?, dictionary_size, seed);
    bl_distance_with(k1, k2, dict)
}

fn paired(k1: &KernelEstimate, k2: &KernelEstimate) -> bool {
    k1.is_empirical()
        && k2.is_empirical()
        && k1.source.seed.is_some()
        && k1.source.seed == k2.source.seed
        && k1.len() == k2.len()
}

// (mean, variance) of f under the atoms, variance only for empirical kernels
fn moments(k: &KernelEstimate, f: &TestFunction) -> (f64, f64) {
    match &k.repr {
        KernelRepr::Empirical { points, weights } => {
            let m: f64 = points.iter().zip(weights).map(|(p, w)| w * f.eval(p)).sum();
            let v: f64 = points.iter().zip(weights).map(|(p, w)| w * (f.eval(p) - m).powi(2)).sum();
            (m, v)
        }
        KernelRepr::GriddedDensity { .. } => (k.integrate(|x| f.eval(x)), 0.0),
    }
}

fn paired_sd(k1: &KernelEstimate, k2: &KernelEstimate, f: &TestFunction) -> f64 {
    let (Some(p1), Some(p2)) = (k1.points(), k2.points()) else {
        return 0.0;
    };
    let d: Vec<f64> = p1.iter().zip(p2).map(|(a, b)| f.eval(a) - f.eval(b)).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// `max_f |∫f dk1 − ∫f dk2|` over a given dictionary.
pub fn bl_distance_with(k1: &KernelEstimate, k2: &KernelEstimate, dictionary: Dictionary) -> Result<BlEstimate> {
    check_dim("kernel", k1.dim, k2.dim)?;
    let stats: Vec<(f64, f64, f64)> = dictionary
        .functions
        .par_iter()
        .map(|f| {
            let (m1, v1) = moments(k1, f);
            let (m2, v2) = moments(k2, f);
            ((m1 - m2).abs(), v1, v2)
        })
        .collect();
    let mut best = 0;
    for (i, s) in stats.iter().enumerate() {
        if s.0 > stats[best].0 {
            best = i;
        }
    }
    let is_paired = paired(k1, k2);
    let band = if is_paired {
        paired_sd(k1, k2, &dictionary.functions[best]) / (k1.len() as f64).sqrt()
    } else {
        let n = |k: &KernelEstimate| if k.is_empirical() { k.len() as f64 } else { f64::INFINITY };
        (stats[best].1 / n(k1) + stats[best].2 / n(k2)).sqrt()
    };
    Ok(BlEstimate {
        value: stats[best].0,
        band,
        argmax: best,
        paired: is_paired,
        dictionary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn functions_are_bounded_and_lipschitz() {
        let b = BoxRegion::new(vec![-2.0, 0.0], vec![3.0, 1.0]).unwrap();
        let d = Dictionary::build(&b, 64, 5);
        assert_eq!(d.len(), 64);
        let mut r = rng::stream(9, 0);
        for f in &d.functions {
            for _ in 0..50 {
                let x: Vec<f64> = (0..2).map(|_| r.random_range(-5.0..5.0)).collect();
                let y: Vec<f64> = (0..2).map(|_| r.random_range(-5.0..5.0)).collect();
                assert!(f.eval(&x).abs() <= 1.0);
                assert!((f.eval(&x) - f.eval(&y)).abs() <= linalg::dist(&x, &y) + 1e-12);
            }
        }
        assert_eq!(Dictionary::build(&b, 64, 5), d);
    }
}
