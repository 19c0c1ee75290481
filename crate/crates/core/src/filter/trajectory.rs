//! Simulated hidden trajectories with the filter in the loop, and their
//! CSV logs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bayes::bayes_update;
use super::{Belief, BeliefSummary};
use crate::error::Result;
use crate::model::StochasticControlModel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    /// Hidden state, when known (simulation).
    pub x: Option<Vec<f64>>,
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub belief: BeliefSummary,
}

/// Runs `horizon` steps. Row `t` holds `x_t`, the observation `y_t`
/// (`y_0 = G0(x_0, η_0)`), the belief `z_t` and the action chosen from it.
/// The prior is not conditioned on `y_0`. Returns the rows and the beliefs.
pub fn simulate_filtered(
    model: &StochasticControlModel,
    z0: Belief,
    policy: &dyn Fn(usize, &Belief) -> Vec<f64>,
    horizon: usize,
    seed: u64,
) -> Result<(Vec<TrajectoryRow>, Vec<Belief>)> {
    let mut rows = Vec::with_capacity(horizon);
    let mut beliefs = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok((rows, beliefs));
    }
    let xis = model.state_noise().sample(rng::derive(seed, 11), horizon);
    let etas = model.obs_noise().sample(rng::derive(seed, 12), horizon);
    let mut x = model.initial_belief().sample(rng::derive(seed, 10), 1).remove(0);
    let mut y = model.initial_observation(&x, &etas[0])?;
    let mut z = z0;
    for t in 0..horizon {
        let a = policy(t, &z);
        rows.push(TrajectoryRow {
            t,
            x: Some(x.clone()),
            a: a.clone(),
            y: y.clone(),
            belief: z.summary(),
        });
        beliefs.push(z.clone());
        if t + 1 == horizon {
            break;
        }
        let xn = model.step_state(&x, &a, &xis[t])?;
        let yn = model.observe_step(&x, &a, &xn, &etas[t + 1])?;
        z = bayes_update(model, &z, &a, &yn)?.posterior;
        x = xn;
        y = yn;
    }
    Ok((rows, beliefs))
}

/// CSV with columns `t, x*, a*, y*, mean*, var*, entropy, support_size`.
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    rows: &[TrajectoryRow],
    state_dim: usize,
    action_dim: usize,
    obs_dim: usize,
) -> Result<()> {
    let mut header = vec!["t".to_string()];
    let cols = |p: &'static str, n: usize| (0..n).map(move |j| format!("{p}{j}"));
    header.extend(cols("x", state_dim));
    header.extend(cols("a", action_dim));
    header.extend(cols("y", obs_dim));
    header.extend(cols("mean", state_dim));
    header.extend(cols("var", state_dim));
    header.push("entropy".into());
    header.push("support_size".into());
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut f = vec![r.t.to_string()];
        match &r.x {
            Some(x) => f.extend(x.iter().map(f64::to_string)),
            None => f.extend(std::iter::repeat_n(String::new(), state_dim)),
        }
        f.extend(r.a.iter().map(f64::to_string));
        f.extend(r.y.iter().map(f64::to_string));
        f.extend(r.belief.mean.iter().map(f64::to_string));
        f.extend(r.belief.variance.iter().map(f64::to_string));
        f.push(r.belief.entropy.map(|e| e.to_string()).unwrap_or_default());
        f.push(r.belief.support_size.to_string());
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}
