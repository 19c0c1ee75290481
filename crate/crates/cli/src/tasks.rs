//! Dispatch from a resolved config to library operations. Tasks return the
//! files to write and summary scalars; nothing is written here.

use std::io::Write;

use beliefmdp::continuity::{continuity_profile_with, feller_modulus_with, set_convergence_check};
use beliefmdp::filter::{bayes_update, simulate_filtered, to_particles, write_trajectory_csv, FiniteModel, TrajectoryRow};
use beliefmdp::model::{check_diffeomorphic, ParamMap, StochasticControlModel};
use beliefmdp::solver::{
    kinf_compact_probe, simulate_policy, value_iteration, FiniteProblem, Policy, ValueFunction,
};
use beliefmdp::{rng, Belief, Error, NoiseDistribution, Result};
use serde_json::{json, Value};

use crate::config::*;

const PARTICLE_SEED: u64 = 3;

pub struct TaskOutput {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
    pub result: Value,
}

/// Fills parameters whose defaults depend on the model, so the echoed config
/// has no hidden defaults.
pub fn fill_model_defaults(config: &mut ExperimentConfig, model: Option<&LoadedModel>) {
    let Some(LoadedModel::Equations(m)) = model else {
        return;
    };
    let dims = m.dims();
    match &mut config.task {
        TaskConfig::Simulate(p) => {
            p.action.get_or_insert_with(|| vec![0.0; dims.action]);
        }
        TaskConfig::Filter(p) => {
            if p.actions.is_empty() {
                p.actions.push(vec![0.0; dims.action]);
            }
        }
        TaskConfig::Diagnose(p) => {
            let n = kernel_map(m, p.kernel).0.param_dim();
            p.s2.get_or_insert_with(|| vec![0.0; n]);
            p.directions.get_or_insert_with(|| axes(n));
        }
        TaskConfig::Feller(p) => {
            p.x.get_or_insert_with(|| vec![0.0; dims.state]);
            p.a.get_or_insert_with(|| vec![0.0; dims.action]);
        }
        _ => {}
    }
}

fn axes(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect()
}

fn kernel_map(m: &StochasticControlModel, k: KernelChoice) -> (ParamMap, &NoiseDistribution) {
    match k {
        KernelChoice::Transition => (m.transition_map(), m.state_noise()),
        KernelChoice::Observation => (m.observation_map(), m.obs_noise()),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn csv<F: FnOnce(&mut Vec<u8>) -> Result<()>>(name: &str, f: F) -> Result<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok((name.to_string(), buf))
}

pub fn run(r: &Resolved) -> Result<TaskOutput> {
    let seed = r.config.seed;
    match (&r.config.task, r.model.as_ref()) {
        (TaskConfig::Simulate(p), Some(LoadedModel::Equations(m))) => simulate_equations(m, p, seed),
        (TaskConfig::Simulate(p), Some(LoadedModel::Finite(m))) => simulate_finite(m, p, seed),
        (TaskConfig::Filter(p), Some(LoadedModel::Equations(m))) => filter_equations(m, p, seed),
        (TaskConfig::Filter(p), Some(LoadedModel::Finite(m))) => filter_finite(m, p),
        (TaskConfig::Diagnose(p), Some(LoadedModel::Equations(m))) => diagnose(m, p, seed),
        (TaskConfig::Feller(p), Some(LoadedModel::Equations(m))) => feller(m, p, seed),
        (TaskConfig::Setconv(p), Some(LoadedModel::Equations(m))) => setconv(m, p),
        (TaskConfig::Solve(p), Some(LoadedModel::Finite(m))) => solve(m, p),
        (TaskConfig::ProbeCost(p), _) => probe(p),
        (t, _) => Err(Error::invalid(format!("task `{}` does not apply to this model", t.name()))),
    }
}

fn initial(m: &StochasticControlModel, particles: Option<usize>, seed: u64) -> Result<Belief> {
    match particles {
        Some(n) => to_particles(m.initial_belief(), n, rng::derive(seed, PARTICLE_SEED)),
        None => Ok(m.initial_belief().clone()),
    }
}

fn simulate_equations(m: &StochasticControlModel, p: &SimulateParams, seed: u64) -> Result<TaskOutput> {
    let d = m.dims();
    let a = p.action.clone().unwrap_or_else(|| vec![0.0; d.action]);
    let z0 = initial(m, p.particles, seed)?;
    let (rows, beliefs) = simulate_filtered(m, z0, &|_, _| a.clone(), p.horizon, seed)?;
    let file = csv("trajectory.csv", |w| write_trajectory_csv(w, &rows, d.state, d.action, d.obs))?;
    Ok(TaskOutput {
        files: vec![file],
        summary: json!({
            "steps": rows.len(),
            "final_belief_mean": beliefs.last().map(Belief::mean),
        }),
        result: Value::Null,
    })
}

fn simulate_finite(m: &FiniteModel, p: &SimulateParams, seed: u64) -> Result<TaskOutput> {
    let problem = FiniteProblem::new(m.clone(), p.cost.spec())?;
    let vf: ValueFunction;
    let policy = match &p.policy {
        PolicyConfig::Constant { action } => Policy::Constant(*action),
        PolicyConfig::UniformRandom => Policy::UniformRandom,
        PolicyConfig::Greedy { grid, vi } => {
            vf = value_iteration(&problem, &grid.build(m.n_states())?, *vi)?;
            Policy::Value(&vf)
        }
    };
    let keep = p.keep_trajectories.unwrap_or(p.episodes);
    let mut rep = simulate_policy(&problem, &policy, &m.initial_belief, p.horizon, seed, p.episodes, keep)?;
    let file = csv("trajectory.csv", |w| rep.write_trajectories_csv(w, m.n_states()))?;
    rep.trajectories.clear();
    Ok(TaskOutput {
        files: vec![file],
        summary: json!({
            "mean_cost": rep.mean,
            "std_dev": rep.std_dev,
            "band": rep.band,
            "flagged": rep.flagged,
        }),
        result: to_json(&rep)?,
    })
}

fn action_at(actions: &[Vec<f64>], t: usize, dim: usize) -> Vec<f64> {
    match actions.len() {
        0 => vec![0.0; dim],
        n => actions[t.min(n - 1)].clone(),
    }
}

fn filter_equations(m: &StochasticControlModel, p: &FilterParams, seed: u64) -> Result<TaskOutput> {
    let d = m.dims();
    let mut z = initial(m, p.particles, seed)?;
    let mut rows = Vec::with_capacity(p.observations.len());
    let mut loglik = 0.0;
    for (t, y) in p.observations.iter().enumerate() {
        if t > 0 {
            let step = bayes_update(m, &z, &action_at(&p.actions, t - 1, d.action), y)?;
            loglik += step.predictive_likelihood.ln();
            z = step.posterior;
        }
        rows.push(TrajectoryRow {
            t,
            x: None,
            a: action_at(&p.actions, t, d.action),
            y: y.clone(),
            belief: z.summary(),
        });
    }
    let file = csv("filter.csv", |w| write_trajectory_csv(w, &rows, d.state, d.action, d.obs))?;
    Ok(TaskOutput {
        files: vec![file],
        summary: json!({
            "steps": rows.len(),
            "log_predictive_likelihood": loglik,
            "final_belief_mean": z.mean(),
        }),
        result: Value::Null,
    })
}

fn index(v: &[f64], n: usize, what: &str) -> Result<usize> {
    match v {
        [k] if *k >= 0.0 && k.fract() == 0.0 && (*k as usize) < n => Ok(*k as usize),
        _ => Err(Error::invalid(format!("{what} {v:?} is not an index below {n}"))),
    }
}

fn filter_finite(m: &FiniteModel, p: &FilterParams) -> Result<TaskOutput> {
    let mut z = m.initial_belief.clone();
    let mut rows = Vec::with_capacity(p.observations.len());
    let mut loglik = 0.0;
    for (t, y) in p.observations.iter().enumerate() {
        let yk = index(y, m.n_obs(), "observation")?;
        if t > 0 {
            let a = index(&action_at(&p.actions, t - 1, 1), m.n_actions(), "action")?;
            let (post, norm) = m.bayes(&z, a, yk)?;
            loglik += norm.ln();
            z = post;
        }
        let a = action_at(&p.actions, t, 1);
        index(&a, m.n_actions(), "action")?;
        rows.push(TrajectoryRow {
            t,
            x: None,
            a,
            y: y.clone(),
            belief: Belief::on_indices(z.clone())?.summary(),
        });
    }
    let file = csv("filter.csv", |w| write_trajectory_csv(w, &rows, 1, 1, 1))?;
    Ok(TaskOutput {
        files: vec![file],
        summary: json!({
            "steps": rows.len(),
            "log_predictive_likelihood": loglik,
            "final_belief": z,
        }),
        result: Value::Null,
    })
}

fn diagnose(m: &StochasticControlModel, p: &DiagnoseParams, seed: u64) -> Result<TaskOutput> {
    let (phi, noise) = kernel_map(m, p.kernel);
    let s2 = p.s2.clone().unwrap_or_else(|| vec![0.0; phi.param_dim()]);
    let dirs = p.directions.clone().unwrap_or_else(|| axes(phi.param_dim()));
    let prof = continuity_profile_with(&phi, noise, &s2, &p.radii, &dirs, p.n_samples, seed, &p.options)?;
    let file = csv("profile.csv", |w| prof.write_csv(w))?;
    let diffeo = match &p.diffeomorphic {
        Some(c) => Some(check_diffeomorphic(&phi, &c.param_box, &c.omega_box, c.grid_res, &c.tolerances)?),
        None => None,
    };
    let last = prof.entries.last();
    Ok(TaskOutput {
        files: vec![file],
        summary: json!({
            "tv_verdict": prof.tv_verdict,
            "bl_verdict": prof.bl_verdict,
            "tv_mode": prof.tv_mode,
            "tv_at_smallest_radius": last.map(|e| e.tv_estimate),
            "bl_at_smallest_radius": last.map(|e| e.bl_estimate),
            "diffeomorphic_verdict": diffeo.as_ref().map(|d| d.verdict),
        }),
        result: json!({ "profile": prof, "diffeomorphic": diffeo }),
    })
}

fn feller(m: &StochasticControlModel, p: &FellerParams, seed: u64) -> Result<TaskOutput> {
    let d = m.dims();
    let x = p.x.clone().unwrap_or_else(|| vec![0.0; d.state]);
    let a = p.a.clone().unwrap_or_else(|| vec![0.0; d.action]);
    let rep = feller_modulus_with(m, &x, &a, &p.radii, p.dictionary_size, p.partition_levels, p.n_samples, seed, &p.options)?;
    let file = csv("feller.csv", |w| {
        writeln!(w, "radius,modulus,band,argmax_level")?;
        for e in &rep.entries {
            writeln!(w, "{},{},{},{}", e.radius, e.modulus, e.band, e.argmax_level)?;
        }
        Ok(())
    })?;
    Ok(TaskOutput {
        files: vec![file],
        summary: json!({
            "modulus": rep.entries.iter().map(|e| e.modulus).collect::<Vec<_>>(),
            "singular_inputs": rep.singular_inputs,
        }),
        result: to_json(&rep)?,
    })
}

fn setconv(m: &StochasticControlModel, p: &SetconvParams) -> Result<TaskOutput> {
    let (phi, _) = kernel_map(m, p.kernel);
    let rep = set_convergence_check(&phi, &p.set, &p.s2, &p.s2_prime, p.resolution)?;
    Ok(TaskOutput {
        files: Vec::new(),
        summary: json!({
            "hausdorff_distance": rep.hausdorff_distance,
            "symdiff_measure": rep.symdiff_measure,
            "inconclusive": rep.inconclusive,
        }),
        result: to_json(&rep)?,
    })
}

fn solve(m: &FiniteModel, p: &SolveParams) -> Result<TaskOutput> {
    let problem = FiniteProblem::new(m.clone(), p.cost.spec())?;
    let grid = p.grid.build(m.n_states())?;
    let vf = value_iteration(&problem, &grid, p.vi)?;
    let values = csv("values.csv", |w| vf.write_values_csv(w))?;
    let log = csv("sweeps.csv", |w| vf.write_log_csv(w))?;
    let v = vf.final_values();
    let at_initial: f64 = grid.represent(&m.initial_belief).iter().map(|(k, w)| w * v[*k]).sum();
    Ok(TaskOutput {
        files: vec![values, log],
        summary: json!({
            "sweeps": vf.log.len(),
            "final_sup_diff": vf.log.last().map(|l| l.sup_diff),
            "stopping_threshold": vf.stopping_threshold,
            "converged": vf.converged,
            "value_at_initial_belief": at_initial,
            "max_projection_error": vf.max_projection_error,
        }),
        result: json!({
            "grid": vf.grid,
            "alpha": vf.alpha,
            "mode": vf.mode,
            "vi_mode": vf.vi_mode,
            "converged": vf.converged,
        }),
    })
}

fn probe(p: &ProbeParams) -> Result<TaskOutput> {
    let rep = kinf_compact_probe(&p.cost.spec(), &p.c_box, p.gamma, &p.search_box, p.resolution, p.mode)?;
    Ok(TaskOutput {
        files: Vec::new(),
        summary: json!({
            "verdict": rep.verdict,
            "observed_action_radius": rep.observed_action_radius,
            "theoretical_bound": rep.theoretical_bound,
        }),
        result: to_json(&rep)?,
    })
}
