//! Sampled kernels `κ(·|s2) = p ∘ φ(s2, ·)⁻¹`.
//!
//! All routines draw the noise from `seed` alone, never from `s2`, so two
//! calls with the same seed at different parameters are coupled sample by
//! sample (common random numbers).

use rayon::prelude::*;

use super::estimate::{KernelEstimate, KernelSource};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::model::{Flavor, NoiseDistribution, ParamMap, StochasticControlModel};
use crate::rng;

/// Seed of the observation-noise stream paired with state-noise seed `seed`.
pub fn observation_seed(seed: u64) -> u64 {
    rng::derive(seed, 1)
}

fn source(param: Vec<f64>, n: usize, seed: u64) -> KernelSource {
    KernelSource {
        param,
        n_samples: Some(n),
        seed: Some(seed),
        ..Default::default()
    }
}

fn apply(phi: &ParamMap, s2: &[f64], omegas: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    omegas.par_iter().map(|w| phi.eval(s2, w)).collect()
}

pub fn pushforward_kernel(
    phi: &ParamMap,
    p: &NoiseDistribution,
    s2: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    check_dim("map parameter", phi.param_dim(), s2.len())?;
    check_dim("noise law", phi.noise_dim(), p.dim())?;
    let omegas = p.sample(seed, n_samples);
    let points = apply(phi, s2, &omegas)?;
    KernelEstimate::empirical(phi.out_dim(), points, source(s2.to_vec(), n_samples, seed))
}

/// `T(·|x, a)`.
pub fn transition_kernel(
    model: &StochasticControlModel,
    x: &[f64],
    a: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    pushforward_kernel(
        &model.transition_map(),
        model.state_noise(),
        &linalg::concat(x, a),
        n_samples,
        seed,
    )
}

/// `Q(·|a, x')` for POMDP models.
pub fn observation_kernel(
    model: &StochasticControlModel,
    a: &[f64],
    x_next: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    if model.flavor() != Flavor::Pomdp {
        return Err(Error::WrongObservationVariant {
            called: "observation_kernel",
            flavor: model.flavor().as_str(),
        });
    }
    pushforward_kernel(
        &model.observation_map(),
        model.obs_noise(),
        &linalg::concat(a, x_next),
        n_samples,
        seed,
    )
}

/// `Q1(·|x, a)` for POMDP1 models.
pub fn observation_kernel1(
    model: &StochasticControlModel,
    x: &[f64],
    a: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    if model.flavor() != Flavor::Pomdp1 {
        return Err(Error::WrongObservationVariant {
            called: "observation_kernel1",
            flavor: model.flavor().as_str(),
        });
    }
    pushforward_kernel(
        &model.observation_map(),
        model.obs_noise(),
        &linalg::concat(x, a),
        n_samples,
        seed,
    )
}

/// Joint law of `(x', y')` given `(x, a)` on `R^{d+m}`. The state noise uses
/// `seed` (so the `x'` block equals [`transition_kernel`] point for point)
/// and the observation noise uses [`observation_seed`]`(seed)`.
pub fn joint_kernel(
    model: &StochasticControlModel,
    x: &[f64],
    a: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let dims = model.dims();
    check_dim("state", dims.state, x.len())?;
    check_dim("action", dims.action, a.len())?;
    let xis = model.state_noise().sample(seed, n_samples);
    let etas = model.obs_noise().sample(observation_seed(seed), n_samples);
    let points: Result<Vec<Vec<f64>>> = xis
        .par_iter()
        .zip(etas.par_iter())
        .map(|(xi, eta)| {
            let xn = model.step_state(x, a, xi)?;
            let y = model.observe_step(x, a, &xn, eta)?;
            Ok(linalg::concat(&xn, &y))
        })
        .collect();
    KernelEstimate::empirical(
        dims.state + dims.obs,
        points?,
        source(linalg::concat(x, a), n_samples, seed),
    )
}
