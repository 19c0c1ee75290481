//! Semi-uniform Feller modulus
//! `sup_f sup_B |∫ f(x') P(dx', B | s') − ∫ f(x') P(dx', B | s)|`
//! with `f` from a bounded-Lipschitz dictionary on the state space and `B`
//! ranging over unions of cells of dyadic rectilinear partitions of `Y`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bl::{Dictionary, TestFunction};
use super::profile::DISCONTINUITY_FLOOR;
use crate::error::{check_dim, Error, Result};
use crate::kernel::joint_kernel;
use crate::linalg;
use crate::model::StochasticControlModel;
use crate::region::BoxRegion;
use crate::rng;

pub const DEFAULT_RADII: [f64; 5] = [0.5, 0.2, 0.1, 0.05, 0.02];
pub const DEFAULT_PARTITION_LEVELS: usize = 6;

/// Dyadic partitions of a box in `Y`: level `k` has `2^k` cells, the bits
/// assigned to the axes round-robin. Outer cells extend to infinity, so
/// every level covers `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YPartition {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub max_level: usize,
}

impl YPartition {
    pub fn bits(&self, level: usize) -> Vec<u32> {
        let m = self.low.len();
        (0..m)
            .map(|j| (level / m + usize::from(j < level % m)) as u32)
            .collect()
    }

    pub fn cells(&self, level: usize) -> usize {
        1 << level
    }

    pub fn cell(&self, level: usize, y: &[f64]) -> usize {
        let mut c = 0;
        for (j, b) in self.bits(level).into_iter().enumerate() {
            let n = 1usize << b;
            let w = self.high[j] - self.low[j];
            let i = if w > 0.0 {
                (((y[j] - self.low[j]) / w * n as f64).floor()).clamp(0.0, (n - 1) as f64) as usize
            } else {
                0
            };
            c = c * n + i;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FellerOptions {
    /// Unit directions in `(x, a)` space; default the first coordinate.
    pub directions: Option<Vec<Vec<f64>>>,
    pub discontinuity_floor: f64,
}

impl Default for FellerOptions {
    fn default() -> Self {
        Self {
            directions: None,
            discontinuity_floor: DISCONTINUITY_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FellerEntry {
    pub radius: f64,
    pub modulus: f64,
    /// Paired Monte Carlo band at the maximizing `(f, B)`.
    pub band: f64,
    /// Best value per partition level (level 0 is the trivial partition).
    pub level_values: Vec<f64>,
    pub argmax_level: usize,
    pub argmax_function: usize,
    pub argmax_direction: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FellerModulusReport {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub n_samples: usize,
    pub seed: u64,
    pub dictionary: Dictionary,
    pub partition: YPartition,
    pub entries: Vec<FellerEntry>,
    /// Some noise law has no density; partition sups may then miss the
    /// Borel sup.
    pub singular_inputs: bool,
    pub discontinuity_floor: f64,
}

/// Value of `sup_U |ν(U)|` over unions of cells for a signed measure given
/// by its cell masses `d`.
pub fn union_sup(d: &[f64]) -> (f64, bool) {
    let pos: f64 = d.iter().filter(|v| **v > 0.0).sum();
    let neg: f64 = -d.iter().filter(|v| **v < 0.0).sum::<f64>();
    if pos >= neg {
        (pos, true)
    } else {
        (neg, false)
    }
}

struct Split {
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
}

fn split(points: &[Vec<f64>], d: usize) -> Split {
    let (xs, ys) = points.iter().map(|p| (p[..d].to_vec(), p[d..].to_vec())).unzip();
    Split { xs, ys }
}

struct Best {
    value: f64,
    level: usize,
    function: usize,
    positive: bool,
    levels: Vec<f64>,
}

fn best_for(dict: &Dictionary, base: &Split, moved: &Split, cb: &[Vec<usize>], cm: &[Vec<usize>], part: &YPartition) -> Best {
    let n = base.xs.len() as f64;
    let per_f: Vec<(Vec<f64>, Vec<bool>)> = dict
        .functions
        .par_iter()
        .map(|f| {
            let fb: Vec<f64> = base.xs.iter().map(|x| f.eval(x)).collect();
            let fm: Vec<f64> = moved.xs.iter().map(|x| f.eval(x)).collect();
            let mut vals = Vec::with_capacity(part.max_level + 1);
            let mut signs = Vec::with_capacity(part.max_level + 1);
            for level in 0..=part.max_level {
                let mut d = vec![0.0; part.cells(level)];
                for i in 0..fb.len() {
                    d[cm[level][i]] += fm[i];
                    d[cb[level][i]] -= fb[i];
                }
                let (v, pos) = union_sup(&d);
                vals.push(v / n);
                signs.push(pos);
            }
            (vals, signs)
        })
        .collect();
    let mut best = Best {
        value: -1.0,
        level: 0,
        function: 0,
        positive: true,
        levels: vec![0.0; part.max_level + 1],
    };
    for (fi, (vals, signs)) in per_f.iter().enumerate() {
        for (level, &v) in vals.iter().enumerate() {
            best.levels[level] = best.levels[level].max(v);
            if v > best.value {
                best.value = v;
                best.level = level;
                best.function = fi;
                best.positive = signs[level];
            }
        }
    }
    best
}

// paired standard error of the maximizing (f, U)
fn band_for(f: &TestFunction, b: &Best, base: &Split, moved: &Split, cb: &[usize], cm: &[usize], cells: usize) -> f64 {
    let mut d = vec![0.0; cells];
    let fb: Vec<f64> = base.xs.iter().map(|x| f.eval(x)).collect();
    let fm: Vec<f64> = moved.xs.iter().map(|x| f.eval(x)).collect();
    for i in 0..fb.len() {
        d[cm[i]] += fm[i];
        d[cb[i]] -= fb[i];
    }
    let in_u = |c: usize| if b.positive { d[c] > 0.0 } else { d[c] < 0.0 };
    let g: Vec<f64> = (0..fb.len())
        .map(|i| {
            let m = if in_u(cm[i]) { fm[i] } else { 0.0 };
            let s = if in_u(cb[i]) { fb[i] } else { 0.0 };
            m - s
        })
        .collect();
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt() / n.sqrt()
}

fn pooled_box(sets: &[&Vec<Vec<f64>>]) -> Result<BoxRegion> {
    let dim = sets[0][0].len();
    let mut low = vec![f64::INFINITY; dim];
    let mut high = vec![f64::NEG_INFINITY; dim];
    for s in sets {
        for p in s.iter() {
            for j in 0..dim {
                low[j] = low[j].min(p[j]);
                high[j] = high[j].max(p[j]);
            }
        }
    }
    BoxRegion::new(low, high)
}

#[allow(clippy::too_many_arguments)]
pub fn feller_modulus(
    model: &StochasticControlModel,
    x: &[f64],
    a: &[f64],
    radii: &[f64],
    f_dictionary_size: usize,
    y_partition_res: usize,
    n_samples: usize,
    seed: u64,
) -> Result<FellerModulusReport> {
    feller_modulus_with(model, x, a, radii, f_dictionary_size, y_partition_res, n_samples, seed, &FellerOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn feller_modulus_with(
    model: &StochasticControlModel,
    x: &[f64],
    a: &[f64],
    radii: &[f64],
    f_dictionary_size: usize,
    y_partition_res: usize,
    n_samples: usize,
    seed: u64,
    opts: &FellerOptions,
) -> Result<FellerModulusReport> {
    let dims = model.dims();
    check_dim("state", dims.state, x.len())?;
    check_dim("action", dims.action, a.len())?;
    if radii.is_empty() || radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::invalid("radii must be finite and nonnegative"));
    }
    if f_dictionary_size == 0 || n_samples == 0 {
        return Err(Error::invalid("dictionary size and sample count must be positive"));
    }
    if y_partition_res > 20 {
        return Err(Error::invalid("y_partition_res is a dyadic level and must be at most 20"));
    }
    let sdim = dims.state + dims.action;
    let directions = match &opts.directions {
        Some(ds) => ds.clone(),
        None => {
            let mut e = vec![0.0; sdim];
            e[0] = 1.0;
            vec![e]
        }
    };
    if directions.is_empty() {
        return Err(Error::invalid("need at least one direction"));
    }
    for u in &directions {
        check_dim("direction", sdim, u.len())?;
        if (linalg::norm(u) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("direction {u:?} is not a unit vector")));
        }
    }

    let d = dims.state;
    let base = split(joint_kernel(model, x, a, n_samples, seed)?.points().expect("empirical"), d);
    let jobs: Vec<(usize, usize)> = (0..radii.len())
        .flat_map(|i| (0..directions.len()).map(move |j| (i, j)))
        .collect();
    let moved: Vec<Split> = jobs
        .iter()
        .map(|&(i, j)| {
            let u = &directions[j];
            let r = radii[i];
            let xp: Vec<f64> = (0..d).map(|k| x[k] + r * u[k]).collect();
            let ap: Vec<f64> = (0..dims.action).map(|k| a[k] + r * u[d + k]).collect();
            let k = joint_kernel(model, &xp, &ap, n_samples, seed)?;
            Ok(split(k.points().expect("empirical"), d))
        })
        .collect::<Result<_>>()?;

    let mut xsets = vec![&base.xs];
    let mut ysets = vec![&base.ys];
    for m in &moved {
        xsets.push(&m.xs);
        ysets.push(&m.ys);
    }
    let dictionary = Dictionary::build(&pooled_box(&xsets)?, f_dictionary_size, rng::derive(seed, 0xB2));
    let yb = pooled_box(&ysets)?;
    let partition = YPartition {
        low: yb.low,
        high: yb.high,
        max_level: y_partition_res,
    };
    let cells_of = |s: &Split| -> Vec<Vec<usize>> {
        (0..=partition.max_level)
            .map(|l| s.ys.iter().map(|y| partition.cell(l, y)).collect())
            .collect()
    };
    let cb = cells_of(&base);

    let mut per_job = Vec::with_capacity(jobs.len());
    for m in &moved {
        let cm = cells_of(m);
        let b = best_for(&dictionary, &base, m, &cb, &cm, &partition);
        let band = band_for(
            &dictionary.functions[b.function],
            &b,
            &base,
            m,
            &cb[b.level],
            &cm[b.level],
            partition.cells(b.level),
        );
        per_job.push((b, band));
    }

    let nd = directions.len();
    let entries = radii
        .iter()
        .enumerate()
        .map(|(i, &radius)| {
            let mut top = i * nd;
            let mut levels = vec![0.0f64; partition.max_level + 1];
            for k in i * nd..(i + 1) * nd {
                if per_job[k].0.value > per_job[top].0.value {
                    top = k;
                }
                for (l, v) in per_job[k].0.levels.iter().enumerate() {
                    levels[l] = levels[l].max(*v);
                }
            }
            let (b, band) = &per_job[top];
            FellerEntry {
                radius,
                modulus: b.value.max(0.0),
                band: *band,
                level_values: levels,
                argmax_level: b.level,
                argmax_function: b.function,
                argmax_direction: top - i * nd,
            }
        })
        .collect();

    Ok(FellerModulusReport {
        state: x.to_vec(),
        action: a.to_vec(),
        directions,
        n_samples,
        seed,
        dictionary,
        partition,
        entries,
        singular_inputs: !model.state_noise().has_density() || !model.obs_noise().has_density(),
        discontinuity_floor: opts.discontinuity_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_sup_takes_larger_signed_part() {
        // a signed measure with zero total: equals half the L1 norm
        let d = [0.2, -0.1, 0.3, -0.4];
        assert_eq!(union_sup(&d), (0.5, true));
        assert!((union_sup(&d).0 - 0.5 * d.iter().map(|v: &f64| v.abs()).sum::<f64>()).abs() < 1e-15);
        // nonzero total: the larger signed part, not half the L1 norm
        assert_eq!(union_sup(&[0.1, -0.5, 0.1]), (0.5, false));
        // brute force over all unions
        let d = [0.3, -0.2, 0.15, 0.05, -0.6];
        let mut best: f64 = 0.0;
        for mask in 0u32..32 {
            let s: f64 = (0..5).filter(|i| mask >> i & 1 == 1).map(|i| d[i]).sum();
            best = best.max(s.abs());
        }
        assert!((union_sup(&d).0 - best).abs() < 1e-15);
    }

    #[test]
    fn partitions_are_nested() {
        let p = YPartition {
            low: vec![0.0, 0.0],
            high: vec![1.0, 2.0],
            max_level: 5,
        };
        assert_eq!(p.bits(3), vec![2, 1]);
        let ys = [[0.1, 0.3], [0.7, 1.9], [0.45, 1.2], [-3.0, 9.0]];
        for l in 0..5 {
            for y in &ys {
                for z in &ys {
                    if p.cell(l + 1, y) == p.cell(l + 1, z) {
                        assert_eq!(p.cell(l, y), p.cell(l, z));
                    }
                }
            }
        }
        assert_eq!(p.cell(0, &[5.0, 5.0]), 0);
    }
}
