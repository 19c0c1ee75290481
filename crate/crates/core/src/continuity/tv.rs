use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{KernelEstimate, KernelRepr};
use crate::linalg;

/// Two coupled sample points closer than this count as the same atom.
pub const ATOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvMode {
    /// `½ L1` of two densities on a common grid.
    GriddedL1,
    /// Fraction of coupled sample pairs that differ; an upper bound on TV.
    CoupledUpperBound,
}

/// A distance estimate with its Monte Carlo (or discretization) band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub band: f64,
    pub mode: TvMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn tv_distance(k1: &KernelEstimate, k2: &KernelEstimate) -> Result<DistanceEstimate> {
    tv_distance_with(k1, k2, ATOM_TOL)
}

pub fn tv_distance_with(k1: &KernelEstimate, k2: &KernelEstimate, atom_tol: f64) -> Result<DistanceEstimate> {
    check_dim("kernel", k1.dim, k2.dim)?;
    match (&k1.repr, &k2.repr) {
        (KernelRepr::GriddedDensity { grid: g1, values: v1 }, KernelRepr::GriddedDensity { grid: g2, values: v2 }) => {
            if g1 != g2 {
                return Err(Error::GridMismatch);
            }
            let h = g1.cell_volume();
            let l1: f64 = v1.iter().zip(v2).map(|(a, b)| (a - b).abs()).sum::<f64>() * h;
            Ok(DistanceEstimate {
                value: (0.5 * l1).min(1.0),
                band: 0.0,
                mode: TvMode::GriddedL1,
                seed: None,
            })
        }
        (KernelRepr::Empirical { points: p1, weights: w1 }, KernelRepr::Empirical { points: p2, weights: w2 }) => {
            let (s1, s2) = (k1.source.seed, k2.source.seed);
            if s1.is_none() || s1 != s2 || p1.len() != p2.len() || w1 != w2 {
                return Err(Error::UnmatchedSeeds(format!(
                    "seeds {s1:?}/{s2:?}, sizes {}/{}",
                    p1.len(),
                    p2.len()
                )));
            }
            let differs: Vec<bool> = p1.iter().zip(p2).map(|(a, b)| linalg::dist(a, b) > atom_tol).collect();
            let frac = if w1.iter().all(|w| *w == w1[0]) {
                differs.iter().filter(|d| **d).count() as f64 / p1.len() as f64
            } else {
                differs.iter().zip(w1).filter(|(d, _)| **d).map(|(_, w)| w).sum::<f64>().min(1.0)
            };
            let n = p1.len() as f64;
            Ok(DistanceEstimate {
                value: frac,
                band: (frac * (1.0 - frac) / n).sqrt(),
                mode: TvMode::CoupledUpperBound,
                seed: s1,
            })
        }
        _ => Err(Error::invalid("tv_distance needs two gridded or two empirical kernels")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSource;

    fn emp(points: Vec<f64>, seed: Option<u64>) -> KernelEstimate {
        let src = KernelSource {
            seed,
            ..Default::default()
        };
        KernelEstimate::empirical(1, points.into_iter().map(|v| vec![v]).collect(), src).unwrap()
    }

    #[test]
    fn coupled_fraction() {
        let a = emp(vec![0.0, 1.0, 2.0, 3.0], Some(4));
        let b = emp(vec![0.0, 1.5, 2.0, 3.5], Some(4));
        let d = tv_distance(&a, &b).unwrap();
        assert_eq!(d.value, 0.5);
        assert_eq!(d.mode, TvMode::CoupledUpperBound);
        assert_eq!(tv_distance(&a, &a).unwrap().value, 0.0);
    }

    #[test]
    fn unmatched_seeds_rejected() {
        let a = emp(vec![0.0, 1.0], Some(1));
        let b = emp(vec![0.0, 1.0], Some(2));
        assert!(matches!(tv_distance(&a, &b), Err(Error::UnmatchedSeeds(_))));
        let c = emp(vec![0.0, 1.0], None);
        assert!(matches!(tv_distance(&c, &c), Err(Error::UnmatchedSeeds(_))));
    }
}
