//! Finite hidden-state models given by probability tables, and their exact
//! Bayes operator.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Belief, FilterStep, StepMeta};
use crate::error::{Error, Result};
use crate::model::Flavor;
use crate::rng;

const ROW_TOL: f64 = 1e-9;

/// Tables of a finite POMDP.
///
/// `transition[a][x][x']`; `observation[a][x'][y]` for POMDP models or
/// `observation[a][x][y]` for POMDP1 models; `cost[x][a]` with `null`
/// meaning `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteModel {
    pub name: String,
    #[serde(default = "default_flavor")]
    pub flavor: Flavor,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// Numeric value of each state (used for summaries and monotonicity
    /// checks); defaults to the index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_values: Option<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub observation: Vec<Vec<Vec<f64>>>,
    pub initial_belief: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<Vec<Vec<Option<f64>>>>,
}

fn default_flavor() -> Flavor {
    Flavor::Pomdp
}

impl FiniteModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: FiniteModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    pub fn state_value(&self, x: usize) -> f64 {
        self.state_values.as_ref().map_or(x as f64, |v| v[x])
    }

    pub fn action_value(&self, a: usize) -> f64 {
        self.action_values.as_ref().map_or(a as f64, |v| v[a])
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, na, ny) = (self.n_states(), self.n_actions(), self.n_obs());
        if nx == 0 || na == 0 || ny == 0 {
            return Err(Error::param("finite model needs states, actions and observations"));
        }
        let check_stochastic = |what: &str, t: &Vec<Vec<Vec<f64>>>, cols: usize| -> Result<()> {
            if t.len() != na {
                return Err(Error::param(format!("{what}: expected {na} action blocks")));
            }
            for (a, block) in t.iter().enumerate() {
                if block.len() != nx {
                    return Err(Error::param(format!("{what}[{a}]: expected {nx} rows")));
                }
                for (x, row) in block.iter().enumerate() {
                    if row.len() != cols || row.iter().any(|p| !(*p >= 0.0)) {
                        return Err(Error::param(format!("{what}[{a}][{x}]: bad row")));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_TOL {
                        return Err(Error::param(format!("{what}[{a}][{x}] sums to {s}")));
                    }
                }
            }
            Ok(())
        };
        check_stochastic("transition", &self.transition, nx)?;
        check_stochastic("observation", &self.observation, ny)?;
        Belief::on_indices(self.initial_belief.clone())
            .map_err(|e| Error::param(format!("initial_belief: {e}")))?;
        if let Some(v) = &self.state_values {
            if v.len() != nx {
                return Err(Error::param("state_values length"));
            }
        }
        if let Some(v) = &self.action_values {
            if v.len() != na {
                return Err(Error::param("action_values length"));
            }
        }
        if let Some(c) = &self.cost {
            if c.len() != nx || c.iter().any(|r| r.len() != na) {
                return Err(Error::param("cost table must be states x actions"));
            }
            if c.iter().flatten().flatten().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
                return Err(Error::param("cost entries must be real or null (+inf)"));
            }
        }
        Ok(())
    }

    /// `c(x, a)` with `+∞` for missing entries; `None` without a cost table.
    pub fn cost_table(&self) -> Option<Vec<Vec<f64>>> {
        self.cost.as_ref().map(|c| {
            c.iter()
                .map(|r| r.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect())
                .collect()
        })
    }

    fn check(&self, z: &[f64], a: usize) -> Result<()> {
        if z.len() != self.n_states() {
            return Err(Error::DimensionMismatch {
                what: "belief".into(),
                expected: self.n_states(),
                got: z.len(),
            });
        }
        if a >= self.n_actions() {
            return Err(Error::invalid(format!("action index {a} out of range")));
        }
        Ok(())
    }

    /// `Σ_x T(·|x, a) z(x)`.
    pub fn predict(&self, z: &[f64], a: usize) -> Result<Vec<f64>> {
        self.check(z, a)?;
        let nx = self.n_states();
        let mut out = vec![0.0; nx];
        for (x, &zx) in z.iter().enumerate() {
            if zx == 0.0 {
                continue;
            }
            for (xn, o) in out.iter_mut().enumerate() {
                *o += zx * self.transition[a][x][xn];
            }
        }
        Ok(out)
    }

    /// Joint law `R({x'} × {y} | z, a)` as a table `[x'][y]`.
    pub fn joint(&self, z: &[f64], a: usize) -> Result<Vec<Vec<f64>>> {
        self.check(z, a)?;
        let (nx, ny) = (self.n_states(), self.n_obs());
        let mut r = vec![vec![0.0; ny]; nx];
        match self.flavor {
            Flavor::Pomdp => {
                let pred = self.predict(z, a)?;
                for xn in 0..nx {
                    for y in 0..ny {
                        r[xn][y] = self.observation[a][xn][y] * pred[xn];
                    }
                }
            }
            Flavor::Pomdp1 => {
                for (x, &zx) in z.iter().enumerate() {
                    if zx == 0.0 {
                        continue;
                    }
                    for xn in 0..nx {
                        let t = zx * self.transition[a][x][xn];
                        for y in 0..ny {
                            r[xn][y] += t * self.observation[a][x][y];
                        }
                    }
                }
            }
        }
        Ok(r)
    }

    /// `R'(y | z, a)` for every observation.
    pub fn predictive_observation(&self, z: &[f64], a: usize) -> Result<Vec<f64>> {
        self.check(z, a)?;
        let ny = self.n_obs();
        let mut out = vec![0.0; ny];
        match self.flavor {
            Flavor::Pomdp => {
                let pred = self.predict(z, a)?;
                for (xn, p) in pred.iter().enumerate() {
                    for (y, o) in out.iter_mut().enumerate() {
                        *o += p * self.observation[a][xn][y];
                    }
                }
            }
            Flavor::Pomdp1 => {
                for (x, zx) in z.iter().enumerate() {
                    for (y, o) in out.iter_mut().enumerate() {
                        *o += zx * self.observation[a][x][y];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `H(z, a, y)` and `R'(y | z, a)`.
    pub fn bayes(&self, z: &[f64], a: usize, y: usize) -> Result<(Vec<f64>, f64)> {
        if y >= self.n_obs() {
            return Err(Error::invalid(format!("observation index {y} out of range")));
        }
        let joint = self.joint(z, a)?;
        let col: Vec<f64> = joint.iter().map(|row| row[y]).collect();
        let norm: f64 = col.iter().sum();
        if !(norm > 0.0) {
            return Err(Error::DegenerateUpdate {
                prior: Box::new(index_belief(z)),
            });
        }
        Ok((col.iter().map(|v| v / norm).collect(), norm))
    }

    /// Exact filter kernel `q(·|z, a)`: `(R'(y), H(z, a, y))` for every `y`
    /// with positive predictive probability.
    pub fn filter_kernel(&self, z: &[f64], a: usize) -> Result<Vec<(usize, f64, Vec<f64>)>> {
        let pr = self.predictive_observation(z, a)?;
        let mut out = Vec::new();
        for (y, p) in pr.iter().enumerate() {
            if *p > 0.0 {
                out.push((y, *p, self.bayes(z, a, y)?.0));
            }
        }
        Ok(out)
    }

    /// `n_draws` samples `y'_i ~ R'(·|z, a)` and their posteriors.
    pub fn filter_kernel_sample(
        &self,
        z: &[f64],
        a: usize,
        n_draws: usize,
        seed: u64,
    ) -> Result<Vec<(usize, Vec<f64>)>> {
        let pr = self.predictive_observation(z, a)?;
        let cdf = super::cumulative(&pr);
        let mut r = rng::stream(seed, 0);
        let mut cache: Vec<Option<Vec<f64>>> = vec![None; self.n_obs()];
        let mut out = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            let y = super::pick(&cdf, r.random::<f64>());
            if cache[y].is_none() {
                cache[y] = Some(self.bayes(z, a, y)?.0);
            }
            out.push((y, cache[y].clone().expect("filled above")));
        }
        Ok(out)
    }

    /// [`FiniteModel::bayes`] wrapped as a [`FilterStep`] on index beliefs.
    pub fn bayes_update(&self, z: &Belief, a: usize, y: usize) -> Result<FilterStep> {
        let w = index_weights(z, self.n_states())?;
        let (post, norm) = self.bayes(&w, a, y)?;
        Ok(FilterStep {
            prior: z.clone(),
            action: vec![a as f64],
            observation: vec![y as f64],
            posterior: Belief::on_indices(post)?,
            predictive_likelihood: norm,
            meta: StepMeta::method("finite"),
        })
    }

    /// Draws `(x, y)` for one step from state `x`: `x' ~ T(·|x,a)` and `y`
    /// from the observation table of the flavor.
    pub fn step<R: Rng>(&self, x: usize, a: usize, r: &mut R) -> (usize, usize) {
        let xn = super::pick(&super::cumulative(&self.transition[a][x]), r.random::<f64>());
        let from = match self.flavor {
            Flavor::Pomdp => xn,
            Flavor::Pomdp1 => x,
        };
        let y = super::pick(&super::cumulative(&self.observation[a][from]), r.random::<f64>());
        (xn, y)
    }
}

fn index_belief(z: &[f64]) -> Belief {
    Belief::FiniteSupport {
        support: (0..z.len()).map(|i| vec![i as f64]).collect(),
        weights: z.to_vec(),
    }
}

/// Weight vector of a finite belief over states `0..n`.
pub fn index_weights(z: &Belief, n: usize) -> Result<Vec<f64>> {
    match z {
        Belief::FiniteSupport { support, weights } if support.len() == n => Ok(weights.clone()),
        Belief::FiniteSupport { .. } => Err(Error::DimensionMismatch {
            what: "finite belief support".into(),
            expected: n,
            got: z.support_size(),
        }),
        _ => Err(Error::Unsupported(format!(
            "finite models need finite-support beliefs, got {}",
            z.kind()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_identity() -> FiniteModel {
        FiniteModel {
            name: "t".into(),
            flavor: Flavor::Pomdp,
            states: vec!["1".into(), "2".into()],
            actions: vec!["a".into()],
            observations: vec!["y1".into(), "y0".into()],
            state_values: None,
            action_values: None,
            transition: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            observation: vec![vec![vec![0.8, 0.2], vec![0.4, 0.6]]],
            initial_belief: vec![0.5, 0.5],
            cost: None,
        }
    }

    #[test]
    fn bayes_arithmetic() {
        let m = two_state_identity();
        let (post, pr) = m.bayes(&[0.5, 0.5], 0, 0).unwrap();
        assert!((pr - 0.6).abs() < 1e-15);
        assert!((post[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((post[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn impossible_observation_is_degenerate() {
        let mut m = two_state_identity();
        m.observation[0] = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert!(matches!(m.bayes(&[0.5, 0.5], 0, 1), Err(Error::DegenerateUpdate { .. })));
    }

    #[test]
    fn validation_catches_bad_rows() {
        let mut m = two_state_identity();
        m.transition[0][0] = vec![0.5, 0.6];
        assert!(m.validate().is_err());
    }
}
