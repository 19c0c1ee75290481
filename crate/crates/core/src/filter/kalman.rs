use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::model::{Flavor, LinearGaussian};
use crate::stats::LN_2PI;

/// Relative threshold below which the innovation covariance is treated as
/// singular.
const INNOVATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanOutput {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Density of the observation under its predictive law.
    pub predictive_density: f64,
}

struct Update {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    density: f64,
}

// Measurement update of N(m, P) with y = G x + η; Joseph form.
fn update(lg: &LinearGaussian, m: &DVector<f64>, p: &DMatrix<f64>, y: &DVector<f64>) -> Result<Update> {
    let g = &lg.g;
    let s = linalg::symmetrize(&(g * p * g.transpose() + &lg.obs_cov));
    let scale = s.amax().max(1.0);
    if linalg::min_eigenvalue(&s) <= INNOVATION_TOL * scale {
        return Err(Error::SingularInnovation);
    }
    let s_inv = s.clone().try_inverse().ok_or(Error::SingularInnovation)?;
    let k = p * g.transpose() * &s_inv;
    let innov = y - (g * m + &lg.obs_mean);
    let mean = m + &k * &innov;
    let n = m.len();
    let ikg = DMatrix::identity(n, n) - &k * g;
    let cov = linalg::symmetrize(&(&ikg * p * ikg.transpose() + &k * &lg.obs_cov * k.transpose()));
    let quad = (innov.transpose() * &s_inv * &innov)[(0, 0)];
    let logdet = linalg::det(&s).ln();
    let density = (-0.5 * (quad + logdet + y.len() as f64 * LN_2PI)).exp();
    Ok(Update { mean, cov, density })
}

fn predict(lg: &LinearGaussian, m: &DVector<f64>, p: &DMatrix<f64>, a: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mean = &lg.f1 * m + &lg.f2 * a + &lg.state_mean;
    let cov = linalg::symmetrize(&(&lg.f1 * p * lg.f1.transpose() + &lg.state_cov));
    (mean, cov)
}

/// One Kalman recursion. POMDP models predict with `a` and then condition
/// on `y = G x' + η`; POMDP1 models condition on `y = G x + η` first and
/// then predict.
pub fn kalman_step(
    lg: &LinearGaussian,
    flavor: Flavor,
    mean: &[f64],
    cov: &DMatrix<f64>,
    a: &[f64],
    y: &[f64],
) -> Result<KalmanOutput> {
    let d = lg.f1.nrows();
    check_dim("mean", d, mean.len())?;
    check_dim("covariance", d, cov.nrows())?;
    check_dim("action", lg.f2.ncols(), a.len())?;
    check_dim("observation", lg.g.nrows(), y.len())?;
    let m = DVector::from_column_slice(mean);
    let a = DVector::from_column_slice(a);
    let y = DVector::from_column_slice(y);
    match flavor {
        Flavor::Pomdp => {
            let (mp, pp) = predict(lg, &m, cov, &a);
            let u = update(lg, &mp, &pp, &y)?;
            Ok(KalmanOutput {
                mean: u.mean,
                cov: u.cov,
                predictive_density: u.density,
            })
        }
        Flavor::Pomdp1 => {
            let u = update(lg, &m, cov, &y)?;
            let (mp, pp) = predict(lg, &u.mean, &u.cov, &a);
            Ok(KalmanOutput {
                mean: mp,
                cov: pp,
                predictive_density: u.density,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(f1: f64, q: f64, g: f64, r: f64) -> LinearGaussian {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        LinearGaussian {
            f1: s(f1),
            f2: s(1.0),
            g: s(g),
            state_mean: DVector::zeros(1),
            state_cov: s(q),
            obs_mean: DVector::zeros(1),
            obs_cov: s(r),
        }
    }

    #[test]
    fn conjugate_update() {
        let out = kalman_step(&scalar(1.0, 0.0, 1.0, 1.0), Flavor::Pomdp, &[0.0], &DMatrix::identity(1, 1), &[0.0], &[0.0]).unwrap();
        assert!(out.mean[0].abs() < 1e-15);
        assert!((out.cov[(0, 0)] - 0.5).abs() < 1e-15);
        let expected = (-0.5 * (2.0f64.ln() + LN_2PI)).exp();
        assert!((out.predictive_density - expected).abs() < 1e-15);
    }

    #[test]
    fn perfect_observation_collapses() {
        let out = kalman_step(&scalar(0.9, 1.0, 1.0, 0.0), Flavor::Pomdp, &[0.0], &DMatrix::identity(1, 1), &[0.0], &[1.3]).unwrap();
        assert!((out.mean[0] - 1.3).abs() < 1e-12);
        assert!(out.cov[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn uninformative_observation_keeps_prior() {
        let out = kalman_step(&scalar(1.0, 0.0, 0.0, 1.0), Flavor::Pomdp, &[0.7], &DMatrix::from_element(1, 1, 2.0), &[0.0], &[5.0]).unwrap();
        assert_eq!(out.mean[0], 0.7);
        assert_eq!(out.cov[(0, 0)], 2.0);
    }

    #[test]
    fn singular_innovation_is_an_error() {
        let r = kalman_step(&scalar(1.0, 0.0, 1.0, 0.0), Flavor::Pomdp, &[0.0], &DMatrix::zeros(1, 1), &[0.0], &[0.0]);
        assert!(matches!(r, Err(Error::SingularInnovation)));
    }
}
