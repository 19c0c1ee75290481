use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A probability measure over the hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Belief {
    /// Weights on finitely many states (grid nodes or labelled states).
    FiniteSupport {
        support: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    /// Weighted particles; `lineage` seeds the next propagation step.
    Particle {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        lineage: u64,
    },
}

/// Compact summary used in trajectory logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub entropy: Option<f64>,
    pub support_size: usize,
}

impl Belief {
    pub fn point_mass(x: Vec<f64>) -> Self {
        Belief::FiniteSupport {
            support: vec![x],
            weights: vec![1.0],
        }
    }

    pub fn finite(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let b = Belief::FiniteSupport { support, weights };
        b.validate()?;
        Ok(b)
    }

    /// Finite belief on states labelled `0..n`.
    pub fn on_indices(weights: Vec<f64>) -> Result<Self> {
        let support = (0..weights.len()).map(|i| vec![i as f64]).collect();
        Self::finite(support, weights)
    }

    pub fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let b = Belief::Gaussian { mean, cov };
        b.validate()?;
        Ok(b)
    }

    pub fn gaussian_from(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        Belief::Gaussian {
            mean: mean.iter().cloned().collect(),
            cov: linalg::to_rows(cov),
        }
    }

    pub fn particles(points: Vec<Vec<f64>>, weights: Vec<f64>, lineage: u64) -> Result<Self> {
        let b = Belief::Particle {
            points,
            weights,
            lineage,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Belief::FiniteSupport { .. } => "finite_support",
            Belief::Gaussian { .. } => "gaussian",
            Belief::Particle { .. } => "particle",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Belief::FiniteSupport { support, .. } => support.first().map_or(0, Vec::len),
            Belief::Gaussian { mean, .. } => mean.len(),
            Belief::Particle { points, .. } => points.first().map_or(0, Vec::len),
        }
    }

    /// Checks the type invariants: normalized nonnegative weights, or a
    /// symmetric PSD covariance.
    pub fn validate(&self) -> Result<()> {
        match self {
            Belief::FiniteSupport { support, weights }
            | Belief::Particle {
                points: support,
                weights,
                ..
            } => {
                if support.is_empty() || support.len() != weights.len() {
                    return Err(Error::invalid("belief support and weights must be nonempty and aligned"));
                }
                let d = support[0].len();
                if support.iter().any(|p| p.len() != d) {
                    return Err(Error::invalid("belief support points differ in dimension"));
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err(Error::invalid("belief weights must be finite and nonnegative"));
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > WEIGHT_SUM_TOL * (weights.len() as f64).max(1.0) {
                    return Err(Error::invalid(format!("belief weights sum to {s}")));
                }
                Ok(())
            }
            Belief::Gaussian { mean, cov } => {
                let m = linalg::from_rows(cov)?;
                if m.nrows() != mean.len() || m.ncols() != mean.len() {
                    return Err(Error::invalid("gaussian belief mean/cov dimensions disagree"));
                }
                if !linalg::is_symmetric(&m, linalg::SYM_TOL) {
                    return Err(Error::invalid("gaussian belief covariance is not symmetric"));
                }
                if !mean.is_empty() && linalg::min_eigenvalue(&m) < -linalg::PSD_TOL {
                    return Err(Error::invalid("gaussian belief covariance is not PSD"));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Belief::Gaussian { mean, .. } => mean.clone(),
            Belief::FiniteSupport { support, weights }
            | Belief::Particle {
                points: support,
                weights,
                ..
            } => {
                let d = self.dim();
                let mut m = vec![0.0; d];
                for (p, w) in support.iter().zip(weights) {
                    for j in 0..d {
                        m[j] += w * p[j];
                    }
                }
                m
            }
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Belief::Gaussian { cov, .. } => linalg::from_rows(cov).expect("validated covariance"),
            Belief::FiniteSupport { support, weights }
            | Belief::Particle {
                points: support,
                weights,
                ..
            } => {
                let d = self.dim();
                let m = self.mean();
                let mut c = DMatrix::zeros(d, d);
                for (p, w) in support.iter().zip(weights) {
                    for i in 0..d {
                        for j in 0..d {
                            c[(i, j)] += w * (p[i] - m[i]) * (p[j] - m[j]);
                        }
                    }
                }
                c
            }
        }
    }

    /// Shannon entropy (nats) of the weight vector for discrete beliefs.
    pub fn entropy(&self) -> Option<f64> {
        match self {
            Belief::FiniteSupport { weights, .. } => Some(
                -weights
                    .iter()
                    .filter(|w| **w > 0.0)
                    .map(|w| w * w.ln())
                    .sum::<f64>(),
            ),
            _ => None,
        }
    }

    pub fn support_size(&self) -> usize {
        match self {
            Belief::FiniteSupport { weights, .. } | Belief::Particle { weights, .. } => {
                weights.iter().filter(|w| **w > 0.0).count()
            }
            Belief::Gaussian { .. } => 0,
        }
    }

    pub fn summary(&self) -> BeliefSummary {
        let cov = self.covariance();
        BeliefSummary {
            mean: self.mean(),
            variance: (0..cov.nrows()).map(|i| cov[(i, i)]).collect(),
            entropy: self.entropy(),
            support_size: self.support_size(),
        }
    }

    /// `n` iid draws from the belief.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, 0);
        match self {
            Belief::Gaussian { mean, cov } => {
                let m = linalg::from_rows(cov).expect("validated covariance");
                let l = linalg::psd_factor(&m);
                let d = mean.len();
                (0..n)
                    .map(|_| {
                        let z = DVector::from_iterator(d, (0..d).map(|_| r.sample::<f64, _>(StandardNormal)));
                        let x = DVector::from_column_slice(mean) + &l * z;
                        x.iter().cloned().collect()
                    })
                    .collect()
            }
            Belief::FiniteSupport { support, weights }
            | Belief::Particle {
                points: support,
                weights,
                ..
            } => {
                let cdf = cumulative(weights);
                (0..n)
                    .map(|_| support[pick(&cdf, r.random::<f64>())].clone())
                    .collect()
            }
        }
    }
}

pub(crate) fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Index `i` with `cdf[i-1] <= u < cdf[i]`, skipping zero-weight entries.
pub(crate) fn pick(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().unwrap_or(&1.0);
    let target = u * total;
    let i = cdf.partition_point(|&c| c <= target);
    i.min(cdf.len() - 1)
}

/// Normalizes nonnegative weights in place; returns the original total.
pub(crate) fn normalize(weights: &mut [f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    if s > 0.0 {
        for w in weights.iter_mut() {
            *w /= s;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_weights() {
        assert!(Belief::on_indices(vec![0.5, 0.5]).is_ok());
        assert!(Belief::on_indices(vec![0.5, 0.6]).is_err());
        assert!(Belief::on_indices(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn validates_covariance() {
        assert!(Belief::gaussian(vec![0.0], vec![vec![1.0]]).is_ok());
        assert!(Belief::gaussian(vec![0.0], vec![vec![-1.0]]).is_err());
        assert!(Belief::gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.2], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn moments_of_finite_belief() {
        let b = Belief::finite(vec![vec![0.0], vec![2.0]], vec![0.25, 0.75]).unwrap();
        assert_eq!(b.mean(), vec![1.5]);
        assert!((b.covariance()[(0, 0)] - 0.75).abs() < 1e-15);
        assert!((b.entropy().unwrap() - (-(0.25f64.ln() * 0.25 + 0.75 * 0.75f64.ln()))).abs() < 1e-15);
    }

    #[test]
    fn pick_skips_zero_weights() {
        let cdf = cumulative(&[0.0, 0.5, 0.0, 0.5]);
        assert_eq!(pick(&cdf, 0.0), 1);
        assert_eq!(pick(&cdf, 0.49), 1);
        assert_eq!(pick(&cdf, 0.5), 3);
        assert_eq!(pick(&cdf, 0.999), 3);
    }
}
