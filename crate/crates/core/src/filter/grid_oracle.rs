//! Brute-force Bayes filter on a rectilinear state grid. Transition and
//! observation densities come from change of variables through the model
//! maps, never from closed forms, so the result is independent of the
//! Kalman and structured-density code paths.

use std::collections::HashMap;

use rayon::prelude::*;

use super::Belief;
use crate::error::{check_dim, Error, Result};
use crate::kernel::density::{density_via_change_of_variables, ChangeOfVariables};
use crate::linalg;
use crate::model::{Flavor, StochasticControlModel};
use crate::region::RectGrid;

/// Grid filter with a per-action cache of the transition matrix
/// `t(x_j | x_i, a)`.
pub struct GridOracle<'a> {
    model: &'a StochasticControlModel,
    grid: RectGrid,
    nodes: Vec<Vec<f64>>,
    cache: HashMap<Vec<u64>, Vec<f64>>,
}

impl<'a> GridOracle<'a> {
    pub fn new(model: &'a StochasticControlModel, grid: RectGrid) -> Result<Self> {
        check_dim("grid", model.dims().state, grid.dim())?;
        if model.dims().state > 2 {
            return Err(Error::Unsupported("grid oracle is limited to d <= 2".into()));
        }
        if !model.state_noise().has_density() || !model.obs_noise().has_density() {
            return Err(Error::Unsupported("grid oracle needs noise densities".into()));
        }
        let nodes = grid.points();
        Ok(Self {
            model,
            grid,
            nodes,
            cache: HashMap::new(),
        })
    }

    pub fn grid(&self) -> &RectGrid {
        &self.grid
    }

    /// Node masses of a belief: density at the nodes (Gaussian) or nearest-
    /// node binning (samples), normalized.
    pub fn discretize(&self, z: &Belief) -> Result<Vec<f64>> {
        let mut w = match z {
            Belief::Gaussian { mean, cov } => {
                let c = linalg::from_rows(cov)?;
                let g = crate::model::NoiseDistribution::gaussian(mean.clone(), linalg::to_rows(&c))?;
                if !g.has_density() {
                    return Err(Error::Unsupported("degenerate Gaussian prior".into()));
                }
                self.nodes.iter().map(|x| g.density(x).unwrap_or(0.0)).collect()
            }
            Belief::FiniteSupport { support, weights } | Belief::Particle { points: support, weights, .. } => {
                let mut w = vec![0.0; self.grid.len()];
                for (p, m) in support.iter().zip(weights) {
                    w[self.grid.nearest(p)] += m;
                }
                w
            }
        };
        if !(super::normalize(&mut w) > 0.0) {
            return Err(Error::invalid("belief has no mass on the grid"));
        }
        Ok(w)
    }

    fn transition_matrix(&mut self, a: &[f64]) -> Result<&Vec<f64>> {
        let key: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
        if !self.cache.contains_key(&key) {
            let phi = self.model.transition_map();
            let p = self.model.state_noise();
            let cov = ChangeOfVariables::new(&phi, p)?;
            let nodes = &self.nodes;
            let rows: Result<Vec<Vec<f64>>> = nodes
                .par_iter()
                .map(|x| {
                    let s2 = linalg::concat(x, a);
                    let mut row = Vec::with_capacity(nodes.len());
                    let mut warm: Option<Vec<f64>> = None;
                    for xn in nodes {
                        let e = cov.eval(&s2, xn, warm.as_deref())?;
                        if e.inversion.omega.is_some() {
                            warm = e.inversion.omega;
                        }
                        row.push(e.value);
                    }
                    Ok(row)
                })
                .collect();
            self.cache.insert(key.clone(), rows?.concat());
        }
        Ok(&self.cache[&key])
    }

    fn obs_density(&self, x: &[f64], a: &[f64], xn: &[f64], y: &[f64]) -> Result<f64> {
        density_via_change_of_variables(
            &self.model.observation_map(),
            self.model.obs_noise(),
            &self.model.observation_param(x, a, xn),
            y,
        )
    }

    /// Posterior node masses and the predictive density of `y`.
    pub fn update(&mut self, z: &[f64], a: &[f64], y: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.grid.len();
        check_dim("grid belief", n, z.len())?;
        check_dim("observation", self.model.dims().obs, y.len())?;
        let h = self.grid.cell_volume();
        let flavor = self.model.flavor();
        let q: Vec<f64> = match flavor {
            Flavor::Pomdp => self
                .nodes
                .par_iter()
                .map(|xn| self.obs_density(xn, a, xn, y))
                .collect::<Result<_>>()?,
            Flavor::Pomdp1 => self
                .nodes
                .par_iter()
                .map(|x| self.obs_density(x, a, x, y))
                .collect::<Result<_>>()?,
        };
        let t = self.transition_matrix(a)?;
        let mut post = vec![0.0; n];
        for i in 0..n {
            let zi = match flavor {
                Flavor::Pomdp => z[i],
                Flavor::Pomdp1 => z[i] * q[i],
            };
            if zi == 0.0 {
                continue;
            }
            let row = &t[i * n..(i + 1) * n];
            for j in 0..n {
                post[j] += zi * row[j];
            }
        }
        if flavor == Flavor::Pomdp {
            for j in 0..n {
                post[j] *= q[j];
            }
        }
        // post[j] is a density in x' (times the masses z_i)
        let norm = post.iter().sum::<f64>() * h;
        if !(norm > 0.0) {
            return Err(Error::DegenerateUpdate {
                prior: Box::new(self.as_belief(z.to_vec())),
            });
        }
        let s: f64 = post.iter().sum();
        for v in &mut post {
            *v /= s;
        }
        Ok((post, norm))
    }

    pub fn as_belief(&self, weights: Vec<f64>) -> Belief {
        Belief::FiniteSupport {
            support: self.nodes.clone(),
            weights,
        }
    }
}

/// One grid Bayes update of node masses `z`; returns the posterior as a
/// finite-support belief on the grid nodes and the predictive density.
pub fn grid_bayes_oracle(
    model: &StochasticControlModel,
    grid: &RectGrid,
    z: &[f64],
    a: &[f64],
    y: &[f64],
) -> Result<(Belief, f64)> {
    let mut o = GridOracle::new(model, grid.clone())?;
    let (post, norm) = o.update(z, a, y)?;
    Ok((o.as_belief(post), norm))
}

/// `L1` distance between a grid belief (node masses on a uniform grid) and
/// a density evaluated at the nodes: `Σ |m_j / h − f(x_j)| h`.
pub fn grid_l1_to_density(grid: &RectGrid, masses: &[f64], density: impl Fn(&[f64]) -> f64) -> f64 {
    let h = grid.cell_volume();
    (0..grid.len())
        .map(|j| (masses[j] / h - density(&grid.point(j))).abs() * h)
        .sum()
}
