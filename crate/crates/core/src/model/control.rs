use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::map::ParamMap;
use super::noise::NoiseDistribution;
use crate::error::{check_dim, Error, Result};
use crate::filter::Belief;
use crate::linalg;

pub type TransitionFn = dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync;
pub type ObservationFn = dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync;
pub type InitialObservationFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
pub type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
pub type PairFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Observation depends on the action and the next state.
    Pomdp,
    /// Observation depends on the current state-action pair.
    Pomdp1,
}

impl Flavor {
    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::Pomdp => "pomdp",
            Flavor::Pomdp1 => "pomdp1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub state: usize,
    pub obs: usize,
    pub action: usize,
    pub state_noise: usize,
    pub obs_noise: usize,
}

#[derive(Clone)]
pub enum ObservationMap {
    /// `y' = G(a, x', η)`
    NextState(Arc<ObservationFn>),
    /// `y' = G1(x, a, η)`
    CurrentState(Arc<ObservationFn>),
}

/// Closed-form structure of the transition equation, when known. Used for
/// fast densities and as a cross-check against the generic numeric routes.
#[derive(Clone)]
pub enum TransitionStructure {
    /// `x' = F1 x + F2 a + ξ`
    Linear { f1: DMatrix<f64>, f2: DMatrix<f64> },
    /// `x' = f(x, a) + ξ`
    Additive(Arc<PairFn>),
    /// `x' = diag(ξ) f(x, a)`
    Multiplicative(Arc<PairFn>),
    General,
}

/// Closed-form structure of the observation equation (in the next state for
/// POMDP models, in the current state for POMDP1 models).
#[derive(Clone)]
pub enum ObservationStructure {
    /// `y = G x + η`
    Linear { g: DMatrix<f64> },
    /// `y = g(x) + η`
    Additive(Arc<VecFn>),
    /// `y = diag(η) g(x)`
    Multiplicative(Arc<VecFn>),
    General,
}

/// Why a model deliberately falls outside the continuity assumptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonCompliance {
    /// A noise law has no Lebesgue density (point mass or singular).
    MissingDensity { noise: String },
    /// The noise-to-output map has a singular Jacobian somewhere.
    SingularJacobian,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub catalog: Option<String>,
    pub params: serde_json::Value,
    pub non_compliance: Option<NonCompliance>,
}

/// Matrices of a linear-Gaussian model.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub state_mean: DVector<f64>,
    pub state_cov: DMatrix<f64>,
    pub obs_mean: DVector<f64>,
    pub obs_cov: DMatrix<f64>,
}

/// A partially observed control system given by stochastic equations
/// `x' = F(x, a, ξ)` and `y' = G(a, x', η)` (or `y' = G1(x, a, η)`).
#[derive(Clone)]
pub struct StochasticControlModel {
    name: String,
    dims: Dims,
    flavor: Flavor,
    transition: Arc<TransitionFn>,
    observation: ObservationMap,
    initial_observation: Arc<InitialObservationFn>,
    state_noise: NoiseDistribution,
    obs_noise: NoiseDistribution,
    initial_belief: Belief,
    transition_structure: TransitionStructure,
    observation_structure: ObservationStructure,
    meta: ModelMeta,
}

impl fmt::Debug for StochasticControlModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochasticControlModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("flavor", &self.flavor)
            .field("meta", &self.meta)
            .finish()
    }
}

/// Everything needed to assemble a model; checked by `build`.
pub struct ModelParts {
    pub name: String,
    pub dims: Dims,
    pub transition: Arc<TransitionFn>,
    pub observation: ObservationMap,
    pub initial_observation: Arc<InitialObservationFn>,
    pub state_noise: NoiseDistribution,
    pub obs_noise: NoiseDistribution,
    pub initial_belief: Belief,
    pub transition_structure: TransitionStructure,
    pub observation_structure: ObservationStructure,
    pub meta: ModelMeta,
}

impl ModelParts {
    pub fn build(self) -> Result<StochasticControlModel> {
        let flavor = match self.observation {
            ObservationMap::NextState(_) => Flavor::Pomdp,
            ObservationMap::CurrentState(_) => Flavor::Pomdp1,
        };
        let d = self.dims;
        if [d.state, d.obs, d.action, d.state_noise, d.obs_noise].contains(&0) {
            return Err(Error::param("all model dimensions must be positive"));
        }
        check_dim("state noise", d.state_noise, self.state_noise.dim())?;
        check_dim("observation noise", d.obs_noise, self.obs_noise.dim())?;
        self.initial_belief.validate()?;
        check_dim("initial belief", d.state, self.initial_belief.dim())?;
        let model = StochasticControlModel {
            name: self.name,
            dims: d,
            flavor,
            transition: self.transition,
            observation: self.observation,
            initial_observation: self.initial_observation,
            state_noise: self.state_noise,
            obs_noise: self.obs_noise,
            initial_belief: self.initial_belief,
            transition_structure: self.transition_structure,
            observation_structure: self.observation_structure,
            meta: self.meta,
        };
        model.smoke_test()?;
        Ok(model)
    }
}

impl StochasticControlModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn state_noise(&self) -> &NoiseDistribution {
        &self.state_noise
    }

    pub fn obs_noise(&self) -> &NoiseDistribution {
        &self.obs_noise
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial_belief
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn transition_structure(&self) -> &TransitionStructure {
        &self.transition_structure
    }

    pub fn observation_structure(&self) -> &ObservationStructure {
        &self.observation_structure
    }

    pub fn with_initial_belief(mut self, p0: Belief) -> Result<Self> {
        p0.validate()?;
        check_dim("initial belief", self.dims.state, p0.dim())?;
        self.initial_belief = p0;
        Ok(self)
    }

    // Evaluates every map on a few sampled inputs so that dimension and
    // totality errors surface at construction time.
    fn smoke_test(&self) -> Result<()> {
        let xs = self.initial_belief.sample(0x5EED, 8);
        let xis = self.state_noise.sample(0x5EED, 8);
        let etas = self.obs_noise.sample(0x5EED + 1, 8);
        let a = vec![0.0; self.dims.action];
        for ((x, xi), eta) in xs.iter().zip(&xis).zip(&etas) {
            let xn = self.step_state(x, &a, xi)?;
            match self.flavor {
                Flavor::Pomdp => self.observe(&a, &xn, eta)?,
                Flavor::Pomdp1 => self.observe1(x, &a, eta)?,
            };
            self.initial_observation(x, eta)?;
        }
        Ok(())
    }

    /// `F(x, a, ξ)`.
    pub fn step_state(&self, x: &[f64], a: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.dims.state, x.len())?;
        check_dim("action", self.dims.action, a.len())?;
        check_dim("state noise", self.dims.state_noise, xi.len())?;
        let y = (self.transition)(x, a, xi);
        finite_output("transition", self.dims.state, y, x, xi)
    }

    /// `G(a, x', η)` for POMDP models.
    pub fn observe(&self, a: &[f64], x_next: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        let ObservationMap::NextState(g) = &self.observation else {
            return Err(Error::WrongObservationVariant {
                called: "observe",
                flavor: self.flavor.as_str(),
            });
        };
        check_dim("action", self.dims.action, a.len())?;
        check_dim("state", self.dims.state, x_next.len())?;
        check_dim("observation noise", self.dims.obs_noise, eta.len())?;
        finite_output("observation", self.dims.obs, g(a, x_next, eta), x_next, eta)
    }

    /// `G1(x, a, η)` for POMDP1 models.
    pub fn observe1(&self, x: &[f64], a: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        let ObservationMap::CurrentState(g) = &self.observation else {
            return Err(Error::WrongObservationVariant {
                called: "observe1",
                flavor: self.flavor.as_str(),
            });
        };
        check_dim("state", self.dims.state, x.len())?;
        check_dim("action", self.dims.action, a.len())?;
        check_dim("observation noise", self.dims.obs_noise, eta.len())?;
        finite_output("observation", self.dims.obs, g(x, a, eta), x, eta)
    }

    /// `G0(x, η)`; used only when simulating the initial observation.
    pub fn initial_observation(&self, x: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.dims.state, x.len())?;
        check_dim("observation noise", self.dims.obs_noise, eta.len())?;
        finite_output(
            "initial observation",
            self.dims.obs,
            (self.initial_observation)(x, eta),
            x,
            eta,
        )
    }

    /// Observation for either flavor given the full step `(x, a, x')`.
    pub fn observe_step(&self, x: &[f64], a: &[f64], x_next: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        match self.flavor {
            Flavor::Pomdp => self.observe(a, x_next, eta),
            Flavor::Pomdp1 => self.observe1(x, a, eta),
        }
    }

    /// `φ((x, a), ξ) = F(x, a, ξ)` with parameter `s2 = (x, a)`.
    pub fn transition_map(&self) -> ParamMap {
        let f = self.transition.clone();
        let d = self.dims.state;
        let map = ParamMap::new(
            format!("{}:F", self.name),
            d + self.dims.action,
            self.dims.state_noise,
            d,
            move |s2, xi| f(&s2[..d], &s2[d..], xi),
        );
        if self.dims.state_noise != d {
            return map;
        }
        match &self.transition_structure {
            TransitionStructure::Linear { .. } | TransitionStructure::Additive(_) => {
                map.with_jacobian(move |_, _| DMatrix::identity(d, d))
            }
            TransitionStructure::Multiplicative(f) => {
                let f = f.clone();
                map.with_jacobian(move |s2, _| {
                    DMatrix::from_diagonal(&DVector::from_vec(f(&s2[..d], &s2[d..])))
                })
            }
            TransitionStructure::General => map,
        }
    }

    /// Observation map as a parametrized map: `s2 = (a, x')` for POMDP
    /// models and `s2 = (x, a)` for POMDP1 models.
    pub fn observation_map(&self) -> ParamMap {
        let map = self.observation_map_plain();
        let m = self.dims.obs;
        if self.dims.obs_noise != m {
            return map;
        }
        // offset of the state block inside s2
        let off = match self.flavor {
            Flavor::Pomdp => self.dims.action,
            Flavor::Pomdp1 => 0,
        };
        let d = self.dims.state;
        match &self.observation_structure {
            ObservationStructure::Linear { .. } | ObservationStructure::Additive(_) => {
                map.with_jacobian(move |_, _| DMatrix::identity(m, m))
            }
            ObservationStructure::Multiplicative(g) => {
                let g = g.clone();
                map.with_jacobian(move |s2, _| {
                    DMatrix::from_diagonal(&DVector::from_vec(g(&s2[off..off + d])))
                })
            }
            ObservationStructure::General => map,
        }
    }

    fn observation_map_plain(&self) -> ParamMap {
        let p = self.dims.state + self.dims.action;
        match &self.observation {
            ObservationMap::NextState(g) => {
                let g = g.clone();
                let l = self.dims.action;
                ParamMap::new(
                    format!("{}:G", self.name),
                    p,
                    self.dims.obs_noise,
                    self.dims.obs,
                    move |s2, eta| g(&s2[..l], &s2[l..], eta),
                )
            }
            ObservationMap::CurrentState(g) => {
                let g = g.clone();
                let d = self.dims.state;
                ParamMap::new(
                    format!("{}:G1", self.name),
                    p,
                    self.dims.obs_noise,
                    self.dims.obs,
                    move |s2, eta| g(&s2[..d], &s2[d..], eta),
                )
            }
        }
    }

    /// Parameter of the observation map for a step `(x, a, x')`.
    pub fn observation_param(&self, x: &[f64], a: &[f64], x_next: &[f64]) -> Vec<f64> {
        match self.flavor {
            Flavor::Pomdp => linalg::concat(a, x_next),
            Flavor::Pomdp1 => linalg::concat(x, a),
        }
    }

    /// Observation density `q(y | ·)` at the state the observation depends
    /// on (`x'` for POMDP, `x` for POMDP1), using closed forms for the
    /// additive, multiplicative and linear structures. `None` when no
    /// closed form applies or the noise has no density.
    pub fn observation_density_closed_form(&self, state: &[f64], y: &[f64]) -> Option<f64> {
        if !self.obs_noise.has_density() || self.dims.obs != self.dims.obs_noise {
            return None;
        }
        match &self.observation_structure {
            ObservationStructure::Linear { g } => {
                let gx = g * DVector::from_column_slice(state);
                let eta: Vec<f64> = y.iter().zip(gx.iter()).map(|(a, b)| a - b).collect();
                self.obs_noise.density(&eta)
            }
            ObservationStructure::Additive(g) => {
                let gx = g(state);
                let eta: Vec<f64> = y.iter().zip(&gx).map(|(a, b)| a - b).collect();
                self.obs_noise.density(&eta)
            }
            ObservationStructure::Multiplicative(g) => {
                let gx = g(state);
                if gx.iter().any(|v| *v == 0.0) {
                    return None;
                }
                let eta: Vec<f64> = y.iter().zip(&gx).map(|(a, b)| a / b).collect();
                let jac: f64 = gx.iter().map(|v| v.abs()).product();
                Some(self.obs_noise.density(&eta)? / jac)
            }
            ObservationStructure::General => None,
        }
    }

    /// Transition density `t(x' | x, a)` in closed form when available.
    pub fn transition_density_closed_form(&self, x: &[f64], a: &[f64], x_next: &[f64]) -> Option<f64> {
        if !self.state_noise.has_density() || self.dims.state != self.dims.state_noise {
            return None;
        }
        match &self.transition_structure {
            TransitionStructure::Linear { f1, f2 } => {
                let m = f1 * DVector::from_column_slice(x) + f2 * DVector::from_column_slice(a);
                let xi: Vec<f64> = x_next.iter().zip(m.iter()).map(|(p, q)| p - q).collect();
                self.state_noise.density(&xi)
            }
            TransitionStructure::Additive(f) => {
                let m = f(x, a);
                let xi: Vec<f64> = x_next.iter().zip(&m).map(|(p, q)| p - q).collect();
                self.state_noise.density(&xi)
            }
            TransitionStructure::Multiplicative(f) => {
                let m = f(x, a);
                if m.iter().any(|v| *v == 0.0) {
                    return None;
                }
                let xi: Vec<f64> = x_next.iter().zip(&m).map(|(p, q)| p / q).collect();
                let jac: f64 = m.iter().map(|v| v.abs()).product();
                Some(self.state_noise.density(&xi)? / jac)
            }
            TransitionStructure::General => None,
        }
    }

    /// Linear-Gaussian matrices when both equations are linear with
    /// Gaussian noise (the setting of the Kalman filter).
    pub fn linear_gaussian(&self) -> Option<LinearGaussian> {
        let TransitionStructure::Linear { f1, f2 } = &self.transition_structure else {
            return None;
        };
        let ObservationStructure::Linear { g } = &self.observation_structure else {
            return None;
        };
        use super::noise::NoiseSpec;
        let gauss = |n: &NoiseDistribution| match n.spec() {
            NoiseSpec::Gaussian { .. } | NoiseSpec::PointMass { .. } => Some((
                DVector::from_vec(n.mean()),
                n.covariance()?,
            )),
            _ => None,
        };
        let (state_mean, state_cov) = gauss(&self.state_noise)?;
        let (obs_mean, obs_cov) = gauss(&self.obs_noise)?;
        Some(LinearGaussian {
            f1: f1.clone(),
            f2: f2.clone(),
            g: g.clone(),
            state_mean,
            state_cov,
            obs_mean,
            obs_cov,
        })
    }
}

fn finite_output(what: &str, dim: usize, y: Vec<f64>, at: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if y.len() != dim || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation(crate::error::Witness {
            param: at.to_vec(),
            point: noise.to_vec(),
            detail: format!("{what} returned {y:?} (expected {dim} finite values)"),
        }));
    }
    Ok(y)
}
