use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::SimplexGrid;
use super::vi::{FiniteProblem, ValueFunction};
use crate::error::{Error, Result};
use crate::filter::{cumulative, pick};
use crate::rng;

/// Belief-feedback policy for a finite model.
#[derive(Debug, Clone)]
pub enum Policy<'a> {
    /// Greedy policy stored in a value function (time-indexed or stationary).
    Value(&'a ValueFunction),
    /// One action per grid node, nearest-node lookup.
    Grid { grid: &'a SimplexGrid, actions: &'a [usize] },
    Constant(usize),
    UniformRandom,
}

impl Policy<'_> {
    fn act<R: Rng>(&self, t: usize, z: &[f64], n_actions: usize, r: &mut R) -> usize {
        match self {
            Policy::Value(vf) => vf.action(t, z),
            Policy::Grid { grid, actions } => actions[grid.project(z)],
            Policy::Constant(a) => *a,
            Policy::UniformRandom => r.random_range(0..n_actions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStep {
    pub episode: usize,
    pub t: usize,
    pub x: usize,
    pub a: usize,
    pub y: usize,
    pub belief: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n_episodes: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Discounted cost per episode; `None` for flagged episodes.
    pub costs: Vec<Option<f64>>,
    pub mean: f64,
    pub std_dev: f64,
    /// Three standard errors.
    pub band: f64,
    /// Episodes dropped after a degenerate filter update.
    pub flagged: usize,
    pub trajectories: Vec<SimStep>,
}

impl SimulationReport {
    pub fn write_trajectories_csv<W: Write>(&self, mut w: W, n_states: usize) -> Result<()> {
        let z: Vec<String> = (0..n_states).map(|i| format!("z{i}")).collect();
        writeln!(w, "episode,t,x,a,y,{},cost", z.join(","))?;
        for s in &self.trajectories {
            let zs: Vec<String> = s.belief.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{},{},{},{},{},{}", s.episode, s.t, s.x, s.a, s.y, zs.join(","), s.cost)?;
        }
        Ok(())
    }
}

/// Mean and three-standard-error band of the per-episode difference
/// `r1 − r2` over episodes valid in both runs (paired seeds).
pub fn paired_difference(r1: &SimulationReport, r2: &SimulationReport) -> Result<(f64, f64)> {
    if r1.seed != r2.seed || r1.costs.len() != r2.costs.len() {
        return Err(Error::UnmatchedSeeds("simulation runs are not paired".into()));
    }
    let d: Vec<f64> = r1
        .costs
        .iter()
        .zip(&r2.costs)
        .filter_map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    let (m, s) = mean_sd(&d);
    Ok((m, 3.0 * s / (d.len().max(1) as f64).sqrt()))
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if !m.is_finite() {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

/// Seeded rollouts with the exact filter in the loop. The hidden state and
/// observations of episode `e` come from one stream and the policy's own
/// randomness from another, so two policies run with the same seed share
/// their noise.
pub fn simulate_policy(
    p: &FiniteProblem,
    policy: &Policy,
    p0: &[f64],
    horizon: usize,
    seed: u64,
    n_episodes: usize,
    keep_trajectories: usize,
) -> Result<SimulationReport> {
    let m = &p.model;
    if p0.len() != m.n_states() {
        return Err(Error::invalid("initial belief has the wrong length"));
    }
    if let Policy::Grid { grid, actions } = policy {
        if actions.len() != grid.len() || actions.iter().any(|&a| a >= m.n_actions()) {
            return Err(Error::invalid("grid policy does not match the grid or the action set"));
        }
    }
    if let Policy::Constant(a) = policy {
        if *a >= m.n_actions() {
            return Err(Error::invalid("constant action out of range"));
        }
    }
    let alpha = p.alpha();
    let cdf0 = cumulative(p0);
    let episodes: Vec<(Option<f64>, Vec<SimStep>)> = (0..n_episodes)
        .into_par_iter()
        .map(|e| {
            let mut world = rng::stream(rng::derive(seed, 1), e as u64);
            let mut own = rng::stream(rng::derive(seed, 2), e as u64);
            let keep = e < keep_trajectories;
            let mut steps = Vec::new();
            let mut x = pick(&cdf0, world.random::<f64>());
            let mut z = p0.to_vec();
            let mut total = 0.0;
            let mut disc = 1.0;
            for t in 0..horizon {
                let a = policy.act(t, &z, m.n_actions(), &mut own);
                let c = p.cost[x][a];
                total += disc * c;
                disc *= alpha;
                let (xn, y) = m.step(x, a, &mut world);
                if keep {
                    steps.push(SimStep {
                        episode: e,
                        t,
                        x,
                        a,
                        y,
                        belief: z.clone(),
                        cost: c,
                    });
                }
                match m.bayes(&z, a, y) {
                    Ok((post, _)) => z = post,
                    Err(Error::DegenerateUpdate { .. }) => return (None, steps),
                    Err(_) => unreachable!("indices checked above"),
                }
                x = xn;
            }
            (Some(total), steps)
        })
        .collect();
    let costs: Vec<Option<f64>> = episodes.iter().map(|(c, _)| *c).collect();
    let valid: Vec<f64> = costs.iter().flatten().copied().collect();
    let (mean, sd) = mean_sd(&valid);
    Ok(SimulationReport {
        n_episodes,
        horizon,
        alpha,
        seed,
        flagged: costs.iter().filter(|c| c.is_none()).count(),
        band: 3.0 * sd / (valid.len().max(1) as f64).sqrt(),
        mean,
        std_dev: sd,
        costs,
        trajectories: episodes.into_iter().flat_map(|(_, s)| s).collect(),
    })
}
