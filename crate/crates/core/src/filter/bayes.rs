//! Bayes operator `H(z, a, y)`, predictive law `R'(·|z, a)` and samples of
//! the filter kernel `q(·|z, a)` for models given by equations.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kalman::kalman_step;
use super::{Belief, FilterStep, StepMeta};
use crate::error::{check_dim, Error, Result};
use crate::kernel::density::density_via_change_of_variables;
use crate::kernel::{observation_seed, KernelEstimate, KernelSource};
use crate::linalg;
use crate::model::{Flavor, StochasticControlModel};
use crate::rng;

/// Particles are resampled when the effective sample size drops below
/// this fraction of their number.
pub const RESAMPLE_THRESHOLD: f64 = 0.5;

const PROPAGATE: u64 = 0xF1;
const RESAMPLE: u64 = 0xF2;
const NEXT: u64 = 0xF3;

/// Observation density `q(y | ·)` for the step `(x, a, x')`: closed form
/// when the observation equation has a known structure, otherwise change
/// of variables through the observation map.
pub fn observation_density(
    model: &StochasticControlModel,
    x: &[f64],
    a: &[f64],
    x_next: &[f64],
    y: &[f64],
) -> Result<f64> {
    if !model.obs_noise().has_density() {
        return Err(Error::Unsupported(
            "observation noise has no density; particle weights are undefined".into(),
        ));
    }
    let state = match model.flavor() {
        Flavor::Pomdp => x_next,
        Flavor::Pomdp1 => x,
    };
    if let Some(q) = model.observation_density_closed_form(state, y) {
        return Ok(q);
    }
    density_via_change_of_variables(
        &model.observation_map(),
        model.obs_noise(),
        &model.observation_param(x, a, x_next),
        y,
    )
}

/// Turns any belief into `n` equally weighted particles.
pub fn to_particles(z: &Belief, n: usize, seed: u64) -> Result<Belief> {
    if n == 0 {
        return Err(Error::invalid("need at least one particle"));
    }
    let points = z.sample(seed, n);
    Belief::particles(points, vec![1.0 / n as f64; n], rng::derive(seed, NEXT))
}

/// Systematic resampling with a single uniform offset.
pub fn systematic_resample(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let cdf = super::cumulative(weights);
    let total = *cdf.last().unwrap_or(&1.0);
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    for k in 0..n {
        let target = (u + k as f64) / n as f64 * total;
        while i + 1 < n && cdf[i] <= target {
            i += 1;
        }
        out.push(i);
    }
    out
}

/// One bootstrap particle-filter step. Propagation and resampling draw
/// from streams derived from the belief's lineage, so the step is a pure
/// function of its inputs.
pub fn particle_step(model: &StochasticControlModel, z: &Belief, a: &[f64], y: &[f64]) -> Result<FilterStep> {
    let Belief::Particle {
        points,
        weights,
        lineage,
    } = z
    else {
        return Err(Error::invalid("particle_step needs a particle belief"));
    };
    let n = points.len();
    let xis = model.state_noise().sample(rng::derive(*lineage, PROPAGATE), n);
    let stepped: Result<Vec<(Vec<f64>, f64)>> = points
        .par_iter()
        .zip(xis.par_iter())
        .zip(weights.par_iter())
        .map(|((x, xi), w)| {
            let xn = model.step_state(x, a, xi)?;
            let q = if *w > 0.0 {
                observation_density(model, x, a, &xn, y)?
            } else {
                0.0
            };
            Ok((xn, w * q))
        })
        .collect();
    let (mut next, mut w): (Vec<Vec<f64>>, Vec<f64>) = stepped?.into_iter().unzip();
    let norm = super::normalize(&mut w);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateUpdate {
            prior: Box::new(z.clone()),
        });
    }
    let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
    let resample = ess < RESAMPLE_THRESHOLD * n as f64;
    if resample {
        let u: f64 = rng::stream(rng::derive(*lineage, RESAMPLE), 0).random();
        let idx = systematic_resample(&w, u);
        next = idx.iter().map(|&i| next[i].clone()).collect();
        w = vec![1.0 / n as f64; n];
    }
    Ok(FilterStep {
        prior: z.clone(),
        action: a.to_vec(),
        observation: y.to_vec(),
        posterior: Belief::Particle {
            points: next,
            weights: w,
            lineage: rng::derive(*lineage, NEXT),
        },
        predictive_likelihood: norm,
        meta: StepMeta {
            method: "particle".into(),
            ess: Some(ess),
            resampled: Some(resample),
            resample_threshold: Some(RESAMPLE_THRESHOLD),
        },
    })
}

/// `H(z, a, y)` by belief variant: Kalman recursion for Gaussian beliefs on
/// linear-Gaussian models, bootstrap particle filter for particle beliefs.
/// Finite-support beliefs go through [`super::FiniteModel`] or
/// [`super::grid_bayes_oracle`].
pub fn bayes_update(model: &StochasticControlModel, z: &Belief, a: &[f64], y: &[f64]) -> Result<FilterStep> {
    let dims = model.dims();
    check_dim("belief", dims.state, z.dim())?;
    check_dim("action", dims.action, a.len())?;
    check_dim("observation", dims.obs, y.len())?;
    let step = match z {
        Belief::Gaussian { mean, cov } => {
            let lg = model.linear_gaussian().ok_or_else(|| {
                Error::Unsupported("Gaussian beliefs need a linear-Gaussian model".into())
            })?;
            let cov = linalg::from_rows(cov)?;
            let out = kalman_step(&lg, model.flavor(), mean, &cov, a, y)?;
            FilterStep {
                prior: z.clone(),
                action: a.to_vec(),
                observation: y.to_vec(),
                posterior: Belief::gaussian_from(&out.mean, &out.cov),
                predictive_likelihood: out.predictive_density,
                meta: StepMeta::method("kalman"),
            }
        }
        Belief::Particle { .. } => particle_step(model, z, a, y)?,
        Belief::FiniteSupport { .. } => {
            return Err(Error::Unsupported(
                "finite-support beliefs need a finite model or the grid oracle".into(),
            ))
        }
    };
    debug_assert!(step.posterior.validate().is_ok());
    Ok(step)
}

/// Sample from `R'(·|z, a)`: `x ~ z`, `x' = F(x, a, ξ)`, `y'` from the
/// observation equation.
pub fn predictive_observation(
    model: &StochasticControlModel,
    z: &Belief,
    a: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    check_dim("belief", model.dims().state, z.dim())?;
    let xs = z.sample(rng::derive(seed, 2), n_samples);
    let xis = model.state_noise().sample(seed, n_samples);
    let etas = model.obs_noise().sample(observation_seed(seed), n_samples);
    let ys: Result<Vec<Vec<f64>>> = xs
        .par_iter()
        .zip(xis.par_iter())
        .zip(etas.par_iter())
        .map(|((x, xi), eta)| {
            let xn = model.step_state(x, a, xi)?;
            model.observe_step(x, a, &xn, eta)
        })
        .collect();
    KernelEstimate::empirical(
        model.dims().obs,
        ys?,
        KernelSource {
            param: a.to_vec(),
            n_samples: Some(n_samples),
            seed: Some(seed),
            ..Default::default()
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterKernelSample {
    pub observations: Vec<Vec<f64>>,
    pub beliefs: Vec<Belief>,
    /// Draws whose update was degenerate; they are skipped.
    pub degenerate: usize,
}

/// `n_draws` samples of `q(·|z, a)`: `y'_i ~ R'(·|z, a)`, `z'_i = H(z, a, y'_i)`.
pub fn filter_kernel_sample(
    model: &StochasticControlModel,
    z: &Belief,
    a: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<FilterKernelSample> {
    let ys = predictive_observation(model, z, a, n_draws, seed)?;
    let ys = ys.points().expect("empirical").to_vec();
    let results: Vec<Result<Belief>> = ys
        .par_iter()
        .map(|y| bayes_update(model, z, a, y).map(|s| s.posterior))
        .collect();
    let mut out = FilterKernelSample {
        observations: Vec::new(),
        beliefs: Vec::new(),
        degenerate: 0,
    };
    for (y, r) in ys.into_iter().zip(results) {
        match r {
            Ok(b) => {
                out.observations.push(y);
                out.beliefs.push(b);
            }
            Err(Error::DegenerateUpdate { .. }) => out.degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
