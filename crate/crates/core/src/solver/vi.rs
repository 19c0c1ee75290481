//! Value iteration for the belief MDP of a finite hidden-state model on a
//! simplex grid. Posteriors that fall between nodes are read off the grid
//! by nearest node or barycentric weights (see [`Projection`](super::grid::Projection)), so each
//! sweep is the Bellman operator of a finite MDP on the grid nodes.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::{AssumptionMode, CostSpec};
use super::grid::SimplexGrid;
use crate::error::{Error, Result};
use crate::filter::FiniteModel;

/// Actions whose backup value is within this of the minimum are optimal.
pub const ARGMIN_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_SWEEPS: usize = 100_000;

/// A finite model with its cost table `c[x][a]` and discount factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteProblem {
    pub model: FiniteModel,
    pub spec: CostSpec,
    #[serde(with = "super::extended::table")]
    pub cost: Vec<Vec<f64>>,
}

impl FiniteProblem {
    pub fn new(model: FiniteModel, spec: CostSpec) -> Result<Self> {
        model.validate()?;
        spec.validate()?;
        let cost = spec.table_for(&model)?;
        Ok(Self { model, spec, cost })
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    /// `c̄(z, a) = Σ_x z(x) c(x, a)`, skipping states of zero mass.
    pub fn lifted(&self, z: &[f64], a: usize) -> f64 {
        z.iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| w * self.cost[x][a])
            .sum()
    }
}

/// One action's backup ingredients at a belief.
#[derive(Debug, Clone, PartialEq)]
struct ActionStep {
    lifted: f64,
    /// `(R'(y|z,a)·λ, node)` over the grid representation of `H(z,a,y)`
    /// for observations of positive mass.
    next: Vec<(f64, usize)>,
}

fn steps_at(p: &FiniteProblem, grid: &SimplexGrid, z: &[f64], proj_err: &mut f64) -> Result<Vec<ActionStep>> {
    (0..p.model.n_actions())
        .map(|a| {
            let joint = p.model.joint(z, a)?;
            let mut next = Vec::new();
            for y in 0..p.model.n_obs() {
                let col: Vec<f64> = joint.iter().map(|r| r[y]).collect();
                let norm: f64 = col.iter().sum();
                if norm > 0.0 {
                    let post: Vec<f64> = col.iter().map(|v| v / norm).collect();
                    let k = grid.project(&post);
                    let err: f64 = grid.belief(k).iter().zip(&post).map(|(a, b)| (a - b).abs()).sum();
                    *proj_err = proj_err.max(err);
                    for (node, w) in grid.represent(&post) {
                        next.push((norm * w, node));
                    }
                }
            }
            Ok(ActionStep {
                lifted: p.lifted(z, a),
                next,
            })
        })
        .collect()
}

fn q_value(step: &ActionStep, alpha: f64, v: &[f64]) -> f64 {
    if step.lifted == f64::INFINITY {
        return f64::INFINITY;
    }
    if alpha == 0.0 {
        return step.lifted;
    }
    let future: f64 = step.next.iter().map(|(pr, k)| pr * v[*k]).sum();
    step.lifted + alpha * future
}

fn minimize(q: &[f64], actions: &[usize]) -> (f64, Vec<usize>) {
    let best = actions.iter().map(|&a| q[a]).fold(f64::INFINITY, f64::min);
    if best == f64::INFINITY {
        return (best, actions.to_vec());
    }
    let mut set: Vec<usize> = actions.iter().copied().filter(|&a| q[a] <= best + ARGMIN_TOL).collect();
    set.sort_unstable();
    set.dedup();
    (best, set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backup {
    pub value: f64,
    /// Actions within [`ARGMIN_TOL`] of the minimum, ascending.
    pub argmin: Vec<usize>,
    /// Backup value of every action (`+∞` outside the action set).
    #[serde(with = "super::extended::vec")]
    pub q: Vec<f64>,
}

/// `min_{a ∈ actions} c̄(z, a) + α Σ_y R'(y|z, a) v_prev(H(z, a, y))` with
/// `v_prev` read off the grid.
pub fn bellman_backup(
    p: &FiniteProblem,
    grid: &SimplexGrid,
    v_prev: &[f64],
    z: &[f64],
    actions: &[usize],
) -> Result<Backup> {
    if actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if let Some(a) = actions.iter().find(|&&a| a >= p.model.n_actions()) {
        return Err(Error::invalid(format!("action index {a} out of range")));
    }
    if v_prev.len() != grid.len() || grid.n_states != p.model.n_states() {
        return Err(Error::invalid("value function does not match the grid"));
    }
    let mut err = 0.0;
    let steps = steps_at(p, grid, z, &mut err)?;
    let mut q = vec![f64::INFINITY; steps.len()];
    for &a in actions {
        q[a] = q_value(&steps[a], p.alpha(), v_prev);
    }
    let (value, argmin) = minimize(&q, actions);
    Ok(Backup { value, argmin, q })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViMode {
    /// `v̄_0 = 0, …, v̄_T` and a time-indexed policy.
    Horizon { horizon: usize },
    /// Sweeps until `sup|v̄_{k+1} − v̄_k| ≤ ε(1−α)/(2α)`.
    Tolerance {
        epsilon: f64,
        #[serde(default = "default_max_sweeps")]
        max_sweeps: usize,
    },
}

fn default_max_sweeps() -> usize {
    DEFAULT_MAX_SWEEPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepLog {
    pub iteration: usize,
    #[serde(with = "super::extended::scalar")]
    pub sup_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub grid: SimplexGrid,
    pub alpha: f64,
    pub mode: AssumptionMode,
    pub vi_mode: ViMode,
    /// Horizon mode: `v̄_0 … v̄_T`. Tolerance mode: the final iterate only.
    #[serde(with = "super::extended::table")]
    pub values: Vec<Vec<f64>>,
    /// Horizon mode: `policy[t]` is the action at time `t` (with `T − t`
    /// stages left). Tolerance mode: one stationary greedy policy.
    pub policy: Vec<Vec<usize>>,
    pub log: Vec<SweepLog>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping_threshold: Option<f64>,
    /// Largest `L1` distance between a posterior and its nearest node.
    pub max_projection_error: f64,
}

impl ValueFunction {
    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("at least one value vector")
    }

    /// Greedy action at `z` for time `t` (nearest-node lookup).
    pub fn action(&self, t: usize, z: &[f64]) -> usize {
        let k = self.grid.project(z);
        let stage = t.min(self.policy.len() - 1);
        self.policy[stage][k]
    }

    pub fn write_log_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,sup_diff")?;
        for l in &self.log {
            writeln!(w, "{},{}", l.iteration, l.sup_diff)?;
        }
        Ok(())
    }

    /// Node beliefs with final values and the first-stage policy.
    pub fn write_values_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.grid.n_states;
        let head: Vec<String> = (0..n).map(|i| format!("z{i}")).collect();
        writeln!(w, "{},value,action", head.join(","))?;
        let v = self.final_values();
        for k in 0..self.grid.len() {
            let z: Vec<String> = self.grid.belief(k).iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{},{}", z.join(","), v[k], self.policy[0][k])?;
        }
        Ok(())
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

/// The grid problem: backup ingredients at every node.
struct GridMdp {
    steps: Vec<Vec<ActionStep>>,
    proj_err: f64,
}

impl GridMdp {
    fn build(p: &FiniteProblem, grid: &SimplexGrid) -> Result<Self> {
        let per: Vec<(Vec<ActionStep>, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let mut err = 0.0;
                let s = steps_at(p, grid, &grid.belief(k), &mut err)?;
                Ok((s, err))
            })
            .collect::<Result<_>>()?;
        let proj_err = per.iter().map(|(_, e)| *e).fold(0.0, f64::max);
        Ok(Self {
            steps: per.into_iter().map(|(s, _)| s).collect(),
            proj_err,
        })
    }

    fn sweep(&self, alpha: f64, v: &[f64], all: &[usize]) -> (Vec<f64>, Vec<usize>) {
        self.steps
            .par_iter()
            .map(|steps| {
                let q: Vec<f64> = steps.iter().map(|s| q_value(s, alpha, v)).collect();
                let (val, set) = minimize(&q, all);
                (val, set[0])
            })
            .unzip()
    }
}

pub fn value_iteration(p: &FiniteProblem, grid: &SimplexGrid, mode: ViMode) -> Result<ValueFunction> {
    if grid.n_states != p.model.n_states() {
        return Err(Error::invalid("grid dimension differs from the number of states"));
    }
    let alpha = p.alpha();
    let mdp = GridMdp::build(p, grid)?;
    let all: Vec<usize> = (0..p.model.n_actions()).collect();
    let mut log = Vec::new();
    let zero = vec![0.0; grid.len()];
    match mode {
        ViMode::Horizon { horizon } => {
            let mut values = vec![zero];
            let mut greedy = Vec::with_capacity(horizon);
            for k in 0..horizon {
                let (v, pol) = mdp.sweep(alpha, &values[k], &all);
                log.push(SweepLog {
                    iteration: k + 1,
                    sup_diff: sup_diff(&v, &values[k]),
                });
                values.push(v);
                greedy.push(pol);
            }
            greedy.reverse();
            if greedy.is_empty() {
                greedy.push(mdp.sweep(alpha, &values[0], &all).1);
            }
            Ok(ValueFunction {
                grid: grid.clone(),
                alpha,
                mode: p.spec.mode,
                vi_mode: mode,
                values,
                policy: greedy,
                log,
                converged: true,
                stopping_threshold: None,
                max_projection_error: mdp.proj_err,
            })
        }
        ViMode::Tolerance { epsilon, max_sweeps } => {
            if !(epsilon >= 0.0) {
                return Err(Error::invalid("epsilon must be nonnegative"));
            }
            let threshold = if alpha == 0.0 {
                f64::INFINITY
            } else {
                epsilon * (1.0 - alpha) / (2.0 * alpha)
            };
            let mut v = zero;
            let mut converged = false;
            for k in 0..max_sweeps {
                let (next, _) = mdp.sweep(alpha, &v, &all);
                let d = sup_diff(&next, &v);
                log.push(SweepLog {
                    iteration: k + 1,
                    sup_diff: d,
                });
                v = next;
                if d <= threshold {
                    converged = true;
                    break;
                }
            }
            let (_, policy) = mdp.sweep(alpha, &v, &all);
            Ok(ValueFunction {
                grid: grid.clone(),
                alpha,
                mode: p.spec.mode,
                vi_mode: mode,
                values: vec![v],
                policy: vec![policy],
                log,
                converged,
                stopping_threshold: threshold.is_finite().then_some(threshold),
                max_projection_error: mdp.proj_err,
            })
        }
    }
}

/// Optimal actions at `z` with respect to the last value function of `vf`;
/// never empty.
pub fn optimal_action_set(vf: &ValueFunction, p: &FiniteProblem, z: &[f64]) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..p.model.n_actions()).collect();
    Ok(bellman_backup(p, &vf.grid, vf.final_values(), z, &all)?.argmin)
}
