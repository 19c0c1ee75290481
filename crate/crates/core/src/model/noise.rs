//! Noise laws for the state and observation disturbances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::region::BoxRegion;
use crate::rng;
use crate::stats;

/// Default per-coordinate quantile used when truncating unbounded supports.
pub const TRUNCATION_QUANTILE: f64 = 1.0 - 1e-6;

/// Serializable description of a noise law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    PointMass {
        at: Vec<f64>,
    },
    /// Independent uniform coordinates on the open box `(low, high)`.
    Uniform {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    /// `N(mean, cov)`; `cov` may be singular, in which case there is no density.
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    /// Independent exponential coordinates with the given rates.
    Exponential {
        rate: Vec<f64>,
    },
    /// `weight · first + (1 − weight) · second`.
    Mixture {
        weight: f64,
        first: Box<NoiseSpec>,
        second: Box<NoiseSpec>,
    },
}

#[derive(Debug, Clone)]
enum Law {
    PointMass(Vec<f64>),
    Uniform(BoxRegion),
    Gaussian(Gaussian),
    Exponential(Vec<f64>),
    Mixture {
        weight: f64,
        first: Box<NoiseDistribution>,
        second: Box<NoiseDistribution>,
    },
}

#[derive(Debug, Clone)]
struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    // (Σ⁻¹, log normalizer) when Σ is nonsingular
    precision: Option<(DMatrix<f64>, f64)>,
    triangular: bool,
}

/// A noise law on `R^n` with a seeded sampler and, where they exist, a
/// Lebesgue density and a triangular inverse-CDF map from `(0,1)^n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpec", into = "NoiseSpec")]
pub struct NoiseDistribution {
    spec: NoiseSpec,
    law: Law,
}

impl PartialEq for NoiseDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl From<NoiseDistribution> for NoiseSpec {
    fn from(d: NoiseDistribution) -> Self {
        d.spec
    }
}

impl TryFrom<NoiseSpec> for NoiseDistribution {
    type Error = Error;

    fn try_from(spec: NoiseSpec) -> Result<Self> {
        let law = match &spec {
            NoiseSpec::PointMass { at } => {
                if at.is_empty() || at.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("point mass location must be finite and nonempty"));
                }
                Law::PointMass(at.clone())
            }
            NoiseSpec::Uniform { low, high } => {
                let b = BoxRegion::new(low.clone(), high.clone())?;
                if b.is_degenerate() {
                    return Err(Error::param("uniform box must have positive width"));
                }
                Law::Uniform(b)
            }
            NoiseSpec::Gaussian { mean, cov } => {
                let cov = linalg::from_rows(cov)?;
                if mean.is_empty() || cov.nrows() != mean.len() || cov.ncols() != mean.len() {
                    return Err(Error::param("gaussian mean/cov dimensions disagree"));
                }
                linalg::check_psd(&cov, "gaussian covariance")?;
                let cov = linalg::symmetrize(&cov);
                let n = mean.len();
                let scale = cov.amax().max(1.0);
                let chol = if linalg::min_eigenvalue(&cov) > 1e-12 * scale {
                    cov.clone().cholesky()
                } else {
                    None
                };
                let (factor, precision, triangular) = match chol {
                    Some(ch) => {
                        let l = ch.l();
                        let logdet: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
                        let inv = ch.inverse();
                        let lognorm = -0.5 * (n as f64 * stats::LN_2PI + logdet);
                        (l, Some((inv, lognorm)), true)
                    }
                    None => (linalg::psd_factor(&cov), None, false),
                };
                Law::Gaussian(Gaussian {
                    mean: DVector::from_column_slice(mean),
                    cov,
                    factor,
                    precision,
                    triangular,
                })
            }
            NoiseSpec::Exponential { rate } => {
                if rate.is_empty() || rate.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
                    return Err(Error::param("exponential rates must be positive"));
                }
                Law::Exponential(rate.clone())
            }
            NoiseSpec::Mixture {
                weight,
                first,
                second,
            } => {
                if !(0.0..=1.0).contains(weight) {
                    return Err(Error::param("mixture weight must lie in [0, 1]"));
                }
                let first = NoiseDistribution::try_from((**first).clone())?;
                let second = NoiseDistribution::try_from((**second).clone())?;
                if first.dim() != second.dim() {
                    return Err(Error::param("mixture components differ in dimension"));
                }
                Law::Mixture {
                    weight: *weight,
                    first: Box::new(first),
                    second: Box::new(second),
                }
            }
        };
        Ok(Self { spec, law })
    }
}

impl NoiseDistribution {
    pub fn new(spec: NoiseSpec) -> Result<Self> {
        Self::try_from(spec)
    }

    pub fn point_mass(at: Vec<f64>) -> Result<Self> {
        Self::new(NoiseSpec::PointMass { at })
    }

    pub fn uniform(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        Self::new(NoiseSpec::Uniform { low, high })
    }

    pub fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(NoiseSpec::Gaussian { mean, cov })
    }

    /// Independent centered normals with the given variances.
    pub fn diag_gaussian(variances: &[f64]) -> Result<Self> {
        let n = variances.len();
        let cov = (0..n)
            .map(|i| (0..n).map(|j| if i == j { variances[i] } else { 0.0 }).collect())
            .collect();
        Self::gaussian(vec![0.0; n], cov)
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::diag_gaussian(&vec![1.0; dim]).expect("identity covariance is valid")
    }

    pub fn exponential(rate: Vec<f64>) -> Result<Self> {
        Self::new(NoiseSpec::Exponential { rate })
    }

    pub fn mixture(weight: f64, first: NoiseSpec, second: NoiseSpec) -> Result<Self> {
        Self::new(NoiseSpec::Mixture {
            weight,
            first: Box::new(first),
            second: Box::new(second),
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match &self.law {
            Law::PointMass(c) => c.len(),
            Law::Uniform(b) => b.dim(),
            Law::Gaussian(g) => g.mean.len(),
            Law::Exponential(r) => r.len(),
            Law::Mixture { first, .. } => first.dim(),
        }
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self.law, Law::PointMass(_))
    }

    /// Whether the law is absolutely continuous w.r.t. Lebesgue measure.
    pub fn has_density(&self) -> bool {
        match &self.law {
            Law::PointMass(_) => false,
            Law::Uniform(_) | Law::Exponential(_) => true,
            Law::Gaussian(g) => g.precision.is_some(),
            Law::Mixture { first, second, .. } => first.has_density() && second.has_density(),
        }
    }

    /// Lebesgue density at `x`, or `None` when the law has no density.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        if x.len() != self.dim() {
            return None;
        }
        match &self.law {
            Law::PointMass(_) => None,
            Law::Uniform(b) => Some(if b.contains_open(x) { 1.0 / b.volume() } else { 0.0 }),
            Law::Gaussian(g) => {
                let (prec, lognorm) = g.precision.as_ref()?;
                let d = DVector::from_column_slice(x) - &g.mean;
                let q = (d.transpose() * prec * &d)[(0, 0)];
                Some((lognorm - 0.5 * q).exp())
            }
            Law::Exponential(rate) => Some(
                x.iter()
                    .zip(rate)
                    .map(|(&v, &r)| if v > 0.0 { r * (-r * v).exp() } else { 0.0 })
                    .product(),
            ),
            Law::Mixture {
                weight,
                first,
                second,
            } => Some(weight * first.density(x)? + (1.0 - weight) * second.density(x)?),
        }
    }

    /// Triangular map from `(0,1)^n` onto the law: coordinate `j` of the
    /// output depends only on `u_1..u_j` and is nondecreasing in `u_j`.
    /// Mixtures have no such map.
    pub fn inverse_cdf(&self, u: &[f64]) -> Option<Vec<f64>> {
        if u.len() != self.dim() {
            return None;
        }
        match &self.law {
            Law::PointMass(c) => Some(c.clone()),
            Law::Uniform(b) => Some(
                (0..b.dim())
                    .map(|j| b.low[j] + u[j] * b.width(j))
                    .collect(),
            ),
            Law::Gaussian(g) => {
                let z = DVector::from_iterator(u.len(), u.iter().map(|&p| stats::norm_quantile(p)));
                let x = &g.mean + &g.factor * z;
                Some(x.iter().cloned().collect())
            }
            Law::Exponential(rate) => Some(
                u.iter()
                    .zip(rate)
                    .map(|(&p, &r)| -(1.0 - p).ln() / r)
                    .collect(),
            ),
            Law::Mixture { .. } => None,
        }
    }

    /// True when `inverse_cdf` is the triangular (Rosenblatt) construction.
    pub fn has_triangular_quantile(&self) -> bool {
        match &self.law {
            Law::Gaussian(g) => g.triangular,
            Law::Mixture { .. } => false,
            _ => true,
        }
    }

    /// Open box containing all the mass, when the support is bounded.
    pub fn support_hint(&self) -> Option<BoxRegion> {
        match &self.law {
            Law::Uniform(b) => Some(b.clone()),
            Law::Mixture { first, second, .. } => {
                Some(first.support_hint()?.union(&second.support_hint()?))
            }
            _ => None,
        }
    }

    /// Box of per-coordinate quantiles `[F_j⁻¹(1 − q), F_j⁻¹(q)]`; equals the
    /// support for bounded laws and may be degenerate for point masses.
    pub fn truncated_box(&self, q: f64) -> BoxRegion {
        match &self.law {
            Law::PointMass(c) => BoxRegion {
                low: c.clone(),
                high: c.clone(),
            },
            Law::Uniform(b) => b.clone(),
            Law::Gaussian(g) => {
                let z = stats::norm_quantile(q);
                let n = g.mean.len();
                BoxRegion {
                    low: (0..n).map(|j| g.mean[j] - z * g.cov[(j, j)].sqrt()).collect(),
                    high: (0..n).map(|j| g.mean[j] + z * g.cov[(j, j)].sqrt()).collect(),
                }
            }
            Law::Exponential(rate) => BoxRegion {
                low: vec![0.0; rate.len()],
                high: rate.iter().map(|r| -(1.0 - q).ln() / r).collect(),
            },
            Law::Mixture { first, second, .. } => {
                first.truncated_box(q).union(&second.truncated_box(q))
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match &self.law {
            Law::PointMass(c) => c.clone(),
            Law::Uniform(b) => b.center(),
            Law::Gaussian(g) => g.mean.iter().cloned().collect(),
            Law::Exponential(rate) => rate.iter().map(|r| 1.0 / r).collect(),
            Law::Mixture {
                weight,
                first,
                second,
            } => first
                .mean()
                .iter()
                .zip(second.mean())
                .map(|(a, b)| weight * a + (1.0 - weight) * b)
                .collect(),
        }
    }

    /// Covariance matrix, when it has a simple closed form.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let n = self.dim();
        match &self.law {
            Law::PointMass(_) => Some(DMatrix::zeros(n, n)),
            Law::Uniform(b) => Some(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    b.width(i).powi(2) / 12.0
                } else {
                    0.0
                }
            })),
            Law::Gaussian(g) => Some(g.cov.clone()),
            Law::Exponential(rate) => Some(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0 / (rate[i] * rate[i])
                } else {
                    0.0
                }
            })),
            Law::Mixture { .. } => None,
        }
    }

    /// Component seeds used by the mixture sampler: the `i`-th mixture
    /// sample is the `i`-th sample of `first` (drawn with the first seed) or
    /// of `second` (second seed).
    pub fn mixture_component_seeds(seed: u64) -> (u64, u64, u64) {
        (rng::derive(seed, 1), rng::derive(seed, 2), rng::derive(seed, 3))
    }

    /// `count` iid draws. Identical `(seed, count)` give identical output,
    /// and the first `k` draws do not depend on `count`.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        if let Law::Mixture {
            weight,
            first,
            second,
        } = &self.law
        {
            let (s1, s2, s3) = Self::mixture_component_seeds(seed);
            let a = first.sample(s1, count);
            let b = second.sample(s2, count);
            let u: Vec<f64> = (0..count.div_ceil(rng::BLOCK))
                .into_par_iter()
                .flat_map_iter(|blk| {
                    let mut r = rng::stream(s3, blk as u64);
                    let len = rng::BLOCK.min(count - blk * rng::BLOCK);
                    (0..len).map(move |_| r.random::<f64>()).collect::<Vec<_>>()
                })
                .collect();
            return a
                .into_iter()
                .zip(b)
                .zip(u)
                .map(|((x, y), u)| if u < *weight { x } else { y })
                .collect();
        }
        let blocks = count.div_ceil(rng::BLOCK);
        (0..blocks)
            .into_par_iter()
            .flat_map_iter(|blk| {
                let mut r = rng::stream(seed, blk as u64);
                let len = rng::BLOCK.min(count - blk * rng::BLOCK);
                (0..len)
                    .map(|_| self.draw_one(&mut r))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn draw_one<R: Rng>(&self, r: &mut R) -> Vec<f64> {
        match &self.law {
            Law::PointMass(c) => c.clone(),
            Law::Uniform(b) => (0..b.dim())
                .map(|j| {
                    let u: f64 = r.sample(Open01);
                    b.low[j] + u * b.width(j)
                })
                .collect(),
            Law::Gaussian(g) => {
                let n = g.mean.len();
                let z = DVector::from_iterator(n, (0..n).map(|_| r.sample::<f64, _>(StandardNormal)));
                (&g.mean + &g.factor * z).iter().cloned().collect()
            }
            Law::Exponential(rate) => rate
                .iter()
                .map(|rt| r.sample::<f64, _>(Exp1) / rt)
                .collect(),
            Law::Mixture { .. } => unreachable!("mixtures are sampled component-wise"),
        }
    }
}

/// Seeded draws; rejects negative counts.
pub fn sample_noise(dist: &NoiseDistribution, seed: u64, count: i64) -> Result<Vec<Vec<f64>>> {
    if count < 0 {
        return Err(Error::invalid(format!("sample count must be nonnegative, got {count}")));
    }
    Ok(dist.sample(seed, count as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::RectGrid;

    fn col(xs: &[Vec<f64>], j: usize) -> Vec<f64> {
        xs.iter().map(|x| x[j]).collect()
    }

    #[test]
    fn point_mass_repeats_location() {
        let d = NoiseDistribution::point_mass(vec![2.5]).unwrap();
        assert_eq!(d.sample(7, 3), vec![vec![2.5]; 3]);
        assert!(d.density(&[2.5]).is_none());
    }

    #[test]
    fn uniform_mean_and_support() {
        let d = NoiseDistribution::uniform(vec![0.0], vec![1.0]).unwrap();
        let xs = sample_noise(&d, 1, 10_000).unwrap();
        assert!((stats::mean(&col(&xs, 0)) - 0.5).abs() < 0.02);
        let hint = d.support_hint().unwrap();
        assert!(xs.iter().all(|x| hint.contains_open(x)));
    }

    #[test]
    fn normal_variance() {
        let d = NoiseDistribution::standard_normal(1);
        let xs = d.sample(1, 10_000);
        assert!((stats::variance(&col(&xs, 0)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn negative_count_rejected() {
        let d = NoiseDistribution::standard_normal(1);
        assert!(sample_noise(&d, 0, -1).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_prefix_stable() {
        let d = NoiseDistribution::diag_gaussian(&[1.0, 4.0]).unwrap();
        let a = d.sample(11, 9000);
        let b = d.sample(11, 9000);
        assert_eq!(a, b);
        let c = d.sample(11, 5000);
        assert_eq!(&a[..5000], &c[..]);
    }

    #[test]
    fn densities_integrate_to_one() {
        let laws = [
            NoiseDistribution::standard_normal(1),
            NoiseDistribution::gaussian(vec![0.5, -1.0], vec![vec![1.0, 0.3], vec![0.3, 0.5]])
                .unwrap(),
            NoiseDistribution::uniform(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap(),
            NoiseDistribution::exponential(vec![2.0]).unwrap(),
        ];
        for law in &laws {
            let b = law.truncated_box(TRUNCATION_QUANTILE);
            let res = if law.dim() == 1 { 4001 } else { 401 };
            let g = RectGrid::over(&b, res).unwrap();
            // trapezoid weights
            let total: f64 = (0..g.len())
                .map(|k| {
                    let idx = g.multi_index(k);
                    let w: f64 = idx
                        .iter()
                        .zip(&g.axes)
                        .map(|(&i, a)| if i == 0 || i == a.n - 1 { 0.5 } else { 1.0 })
                        .product();
                    let p = g.point(k);
                    // open uniform boxes: evaluate just inside the faces
                    let p: Vec<f64> = p
                        .iter()
                        .zip(b.low.iter().zip(&b.high))
                        .map(|(&v, (&l, &h))| v.clamp(l + 1e-12, h - 1e-12))
                        .collect();
                    w * law.density(&p).unwrap()
                })
                .sum::<f64>()
                * g.cell_volume();
            assert!((total - 1.0).abs() < 1e-3, "{:?}: {total}", law.spec());
        }
    }

    #[test]
    fn singular_gaussian_has_no_density() {
        let d = NoiseDistribution::gaussian(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]])
            .unwrap();
        assert!(!d.has_density());
        for x in d.sample(3, 100) {
            assert!((x[0] - x[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_psd_covariance() {
        assert!(NoiseDistribution::gaussian(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]])
            .is_err());
    }

    #[test]
    fn inverse_cdf_is_triangular_for_gaussian() {
        let d = NoiseDistribution::gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.5, 1.0]])
            .unwrap();
        let a = d.inverse_cdf(&[0.3, 0.2]).unwrap();
        let b = d.inverse_cdf(&[0.3, 0.9]).unwrap();
        assert_eq!(a[0], b[0]);
        assert!(b[1] > a[1]);
    }

    #[test]
    fn json_round_trip() {
        let d = NoiseDistribution::mixture(
            0.3,
            NoiseSpec::PointMass { at: vec![1.0] },
            NoiseSpec::Uniform {
                low: vec![0.0],
                high: vec![2.0],
            },
        )
        .unwrap();
        let s = serde_json::to_string(&d).unwrap();
        let back: NoiseDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(s.contains("\"kind\":\"mixture\""));
    }
}
