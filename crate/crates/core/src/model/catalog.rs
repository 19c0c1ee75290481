//! Built-in models, addressed by name with a JSON parameter record.
//!
//! | name | transition | observation |
//! |------|------------|-------------|
//! | `lssm` | `F1 x + F2 a + ξ` | `G x' + η` (or `G x + η` with `flavor: "pomdp1"`) |
//! | `inventory_backorder` | `x + a − ξ` | `x' + η` |
//! | `inventory_lost_sales` | `max(0, x + a − ξ)` componentwise | `x' + η` |
//! | `additive_nonlinear` | `x + ½ sin x + a + ξ` | `x' + 0.2 x'³ + η` |
//! | `multiplicative_nonlinear` | `diag(ξ)(1 + ½x² + a²)` | `diag(η)(1 + x'²)` |
//! | `arctan_example` | `(x² + 1)(a² + 1) arctan ξ` | `x' + η` |
//! | `delta_noise_counterexample` | `x + ξ`, `ξ = 0` a.s. | `x' + η`, `η = 0` a.s. |
//! | `singular_gaussian_counterexample` | `x + a z + ξ`, `ξ ~ N(0, 11ᵀ)` | `x' + η`, `η ~ N(0, 11ᵀ)` |
//!
//! The two counterexamples carry `NonCompliance::MissingDensity` in their
//! metadata.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::control::{
    Dims, Flavor, ModelMeta, ModelParts, NonCompliance, ObservationMap, ObservationStructure,
    StochasticControlModel, TransitionStructure,
};
use super::noise::{NoiseDistribution, NoiseSpec};
use crate::error::{Error, Result};
use crate::filter::Belief;
use crate::linalg;

pub const CATALOG_NAMES: [&str; 8] = [
    "lssm",
    "inventory_backorder",
    "inventory_lost_sales",
    "additive_nonlinear",
    "multiplicative_nonlinear",
    "arctan_example",
    "delta_noise_counterexample",
    "singular_gaussian_counterexample",
];

struct Params<'a> {
    map: Map<String, Value>,
    model: &'a str,
}

impl<'a> Params<'a> {
    fn new(model: &'a str, v: &Value, allowed: &[&str]) -> Result<Self> {
        let map = match v {
            Value::Null => Map::new(),
            Value::Object(m) => m.clone(),
            _ => return Err(Error::param(format!("{model}: params must be a JSON object"))),
        };
        for k in map.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::param(format!(
                    "{model}: unknown parameter `{k}` (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(Self { map, model })
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::param(format!("{}: `{key}` must be a finite number", self.model))),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .filter(|&n| n > 0)
                .map(|n| n as usize)
                .ok_or_else(|| Error::param(format!("{}: `{key}` must be a positive integer", self.model))),
        }
    }

    fn str(&self, key: &str, default: &'a str) -> Result<String> {
        match self.map.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(Error::param(format!("{}: `{key}` must be a string", self.model))),
        }
    }

    /// Matrix parameter: a number `s` means `s·I` (square only), a flat
    /// array is a column vector, nested arrays are rows.
    fn matrix(&self, key: &str, rows: usize, cols: usize, default: f64) -> Result<DMatrix<f64>> {
        let bad = || {
            Error::param(format!(
                "{}: `{key}` must be a number or a {rows}x{cols} matrix",
                self.model
            ))
        };
        let scalar_identity = |s: f64| {
            if rows == cols {
                Ok(DMatrix::identity(rows, cols) * s)
            } else if s == 0.0 {
                Ok(DMatrix::zeros(rows, cols))
            } else {
                Err(bad())
            }
        };
        match self.map.get(key) {
            None => scalar_identity(default),
            Some(Value::Number(n)) => scalar_identity(n.as_f64().ok_or_else(bad)?),
            Some(Value::Array(items)) => {
                if items.iter().all(Value::is_number) {
                    let v: Vec<f64> = items.iter().filter_map(Value::as_f64).collect();
                    if cols == 1 && v.len() == rows {
                        return Ok(DMatrix::from_column_slice(rows, 1, &v));
                    }
                    if rows == 1 && v.len() == cols {
                        return Ok(DMatrix::from_row_slice(1, cols, &v));
                    }
                    return Err(bad());
                }
                let rows_v: Vec<Vec<f64>> = serde_json::from_value(Value::Array(items.clone()))
                    .map_err(|_| bad())?;
                let m = linalg::from_rows(&rows_v)?;
                if m.nrows() != rows || m.ncols() != cols {
                    return Err(bad());
                }
                Ok(m)
            }
            Some(_) => Err(bad()),
        }
    }

    fn vector(&self, key: &str, len: usize, default: f64) -> Result<Vec<f64>> {
        match self.map.get(key) {
            None => Ok(vec![default; len]),
            Some(Value::Number(n)) => Ok(vec![n.as_f64().unwrap_or(default); len]),
            Some(v) => {
                let out: Vec<f64> = serde_json::from_value(v.clone()).map_err(|_| {
                    Error::param(format!("{}: `{key}` must be a number or array", self.model))
                })?;
                if out.len() != len {
                    return Err(Error::param(format!(
                        "{}: `{key}` must have length {len}",
                        self.model
                    )));
                }
                Ok(out)
            }
        }
    }

    fn noise(&self, key: &str) -> Result<Option<NoiseDistribution>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => {
                let spec: NoiseSpec = serde_json::from_value(v.clone())
                    .map_err(|e| Error::param(format!("{}: `{key}`: {e}", self.model)))?;
                Ok(Some(NoiseDistribution::new(spec)?))
            }
        }
    }
}

fn gaussian(mean: Vec<f64>, cov: &DMatrix<f64>) -> Result<NoiseDistribution> {
    linalg::check_psd(cov, "covariance")?;
    NoiseDistribution::gaussian(mean, linalg::to_rows(cov))
}

fn prior(p: &Params, d: usize, mean: f64, var: f64) -> Result<Belief> {
    let m = p.vector("prior_mean", d, mean)?;
    let c = p.matrix("prior_cov", d, d, var)?;
    linalg::check_psd(&c, "prior_cov")?;
    Belief::gaussian(m, linalg::to_rows(&c))
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    m * DVector::from_column_slice(v)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Builds a catalog model from its name and parameter record.
pub fn catalog_model(name: &str, params: &Value) -> Result<StochasticControlModel> {
    match name {
        "lssm" => lssm(params),
        "inventory_backorder" => inventory(params, false),
        "inventory_lost_sales" => inventory(params, true),
        "additive_nonlinear" => additive_nonlinear(params),
        "multiplicative_nonlinear" => multiplicative_nonlinear(params),
        "arctan_example" => arctan_example(params),
        "delta_noise_counterexample" => delta_counterexample(params),
        "singular_gaussian_counterexample" => singular_gaussian(params),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn meta(name: &str, params: &Value, non_compliance: Option<NonCompliance>) -> ModelMeta {
    ModelMeta {
        catalog: Some(name.to_string()),
        params: if params.is_null() { json!({}) } else { params.clone() },
        non_compliance,
    }
}

fn lssm(params: &Value) -> Result<StochasticControlModel> {
    let p = Params::new(
        "lssm",
        params,
        &[
            "d", "m", "l", "f1", "f2", "g", "state_cov", "obs_cov", "prior_mean", "prior_cov",
            "flavor", "state_noise", "obs_noise",
        ],
    )?;
    let d = p.usize("d", 1)?;
    let m = p.usize("m", d)?;
    let l = p.usize("l", d)?;
    let f1 = p.matrix("f1", d, d, 0.9)?;
    let f2 = p.matrix("f2", d, l, 1.0)?;
    let g = p.matrix("g", m, d, 1.0)?;
    let state_noise = match p.noise("state_noise")? {
        Some(n) => n,
        None => gaussian(vec![0.0; d], &p.matrix("state_cov", d, d, 1.0)?)?,
    };
    let obs_noise = match p.noise("obs_noise")? {
        Some(n) => n,
        None => gaussian(vec![0.0; m], &p.matrix("obs_cov", m, m, 0.25)?)?,
    };
    let flavor = match p.str("flavor", "pomdp")?.as_str() {
        "pomdp" => Flavor::Pomdp,
        "pomdp1" => Flavor::Pomdp1,
        other => return Err(Error::param(format!("lssm: unknown flavor `{other}`"))),
    };
    let p0 = prior(&p, d, 0.0, 1.0)?;

    let (f1c, f2c) = (f1.clone(), f2.clone());
    let transition = Arc::new(move |x: &[f64], a: &[f64], xi: &[f64]| {
        let v = mat_vec(&f1c, x) + mat_vec(&f2c, a);
        add(v.as_slice(), xi)
    });
    let gc = g.clone();
    let obs_fn = Arc::new(move |x: &[f64], eta: &[f64]| add(mat_vec(&gc, x).as_slice(), eta));
    let o = obs_fn.clone();
    let observation = match flavor {
        Flavor::Pomdp => ObservationMap::NextState(Arc::new(move |_a: &[f64], xn: &[f64], eta: &[f64]| o(xn, eta))),
        Flavor::Pomdp1 => ObservationMap::CurrentState(Arc::new(move |x: &[f64], _a: &[f64], eta: &[f64]| o(x, eta))),
    };
    let non_compliance = match flavor {
        Flavor::Pomdp if !state_noise.has_density() && !obs_noise.has_density() => {
            Some(NonCompliance::MissingDensity {
                noise: "state and observation".into(),
            })
        }
        Flavor::Pomdp1 if !obs_noise.has_density() => Some(NonCompliance::MissingDensity {
            noise: "observation".into(),
        }),
        _ => None,
    };
    ModelParts {
        name: "lssm".into(),
        dims: Dims {
            state: d,
            obs: m,
            action: l,
            state_noise: state_noise.dim(),
            obs_noise: obs_noise.dim(),
        },
        transition,
        observation,
        initial_observation: obs_fn,
        state_noise,
        obs_noise,
        initial_belief: p0,
        transition_structure: TransitionStructure::Linear { f1, f2 },
        observation_structure: ObservationStructure::Linear { g },
        meta: meta("lssm", params, non_compliance),
    }
    .build()
}

fn identity_obs(d: usize) -> (ObservationMap, Arc<super::control::InitialObservationFn>) {
    let _ = d;
    (
        ObservationMap::NextState(Arc::new(|_a: &[f64], xn: &[f64], eta: &[f64]| add(xn, eta))),
        Arc::new(|x: &[f64], eta: &[f64]| add(x, eta)),
    )
}

fn inventory(params: &Value, lost_sales: bool) -> Result<StochasticControlModel> {
    let name = if lost_sales {
        "inventory_lost_sales"
    } else {
        "inventory_backorder"
    };
    let p = Params::new(
        name,
        params,
        &["d", "demand_max", "obs_var", "prior_mean", "prior_cov", "state_noise", "obs_noise"],
    )?;
    let d = p.usize("d", 1)?;
    let demand_max = p.f64("demand_max", 1.0)?;
    if demand_max <= 0.0 {
        return Err(Error::param(format!("{name}: demand_max must be positive")));
    }
    let state_noise = match p.noise("state_noise")? {
        Some(n) => n,
        None => NoiseDistribution::uniform(vec![0.0; d], vec![demand_max; d])?,
    };
    let obs_noise = match p.noise("obs_noise")? {
        Some(n) => n,
        None => {
            let v = p.f64("obs_var", 0.25)?;
            gaussian(vec![0.0; d], &(DMatrix::identity(d, d) * v))?
        }
    };
    let transition: Arc<super::control::TransitionFn> = if lost_sales {
        Arc::new(|x: &[f64], a: &[f64], xi: &[f64]| {
            x.iter()
                .zip(a)
                .zip(xi)
                .map(|((x, a), xi)| (x + a - xi).max(0.0))
                .collect()
        })
    } else {
        Arc::new(|x: &[f64], a: &[f64], xi: &[f64]| {
            x.iter().zip(a).zip(xi).map(|((x, a), xi)| x + a - xi).collect()
        })
    };
    let (observation, initial_observation) = identity_obs(d);
    let nc = (!obs_noise.has_density()).then(|| NonCompliance::MissingDensity {
        noise: "observation".into(),
    });
    ModelParts {
        name: name.into(),
        dims: Dims {
            state: d,
            obs: d,
            action: d,
            state_noise: state_noise.dim(),
            obs_noise: obs_noise.dim(),
        },
        transition,
        observation,
        initial_observation,
        initial_belief: prior(&p, d, 2.0, 1.0)?,
        state_noise,
        obs_noise,
        transition_structure: TransitionStructure::General,
        observation_structure: ObservationStructure::Linear {
            g: DMatrix::identity(d, d),
        },
        meta: meta(name, params, nc),
    }
    .build()
}

fn additive_nonlinear(params: &Value) -> Result<StochasticControlModel> {
    let name = "additive_nonlinear";
    let p = Params::new(name, params, &["d", "state_var", "obs_var", "prior_mean", "prior_cov"])?;
    let d = p.usize("d", 1)?;
    let state_noise = gaussian(vec![0.0; d], &(DMatrix::identity(d, d) * p.f64("state_var", 1.0)?))?;
    let obs_noise = gaussian(vec![0.0; d], &(DMatrix::identity(d, d) * p.f64("obs_var", 0.25)?))?;
    let f: Arc<super::control::PairFn> = Arc::new(|x: &[f64], a: &[f64]| {
        x.iter().zip(a).map(|(x, a)| x + 0.5 * x.sin() + a).collect()
    });
    let g: Arc<super::control::VecFn> =
        Arc::new(|x: &[f64]| x.iter().map(|x| x + 0.2 * x * x * x).collect());
    let (fc, gc, g0) = (f.clone(), g.clone(), g.clone());
    ModelParts {
        name: name.into(),
        dims: Dims {
            state: d,
            obs: d,
            action: d,
            state_noise: d,
            obs_noise: d,
        },
        transition: Arc::new(move |x: &[f64], a: &[f64], xi: &[f64]| add(&fc(x, a), xi)),
        observation: ObservationMap::NextState(Arc::new(move |_a: &[f64], xn: &[f64], eta: &[f64]| add(&gc(xn), eta))),
        initial_observation: Arc::new(move |x: &[f64], eta: &[f64]| add(&g0(x), eta)),
        state_noise,
        obs_noise,
        initial_belief: prior(&p, d, 0.0, 1.0)?,
        transition_structure: TransitionStructure::Additive(f),
        observation_structure: ObservationStructure::Additive(g),
        meta: meta(name, params, None),
    }
    .build()
}

fn multiplicative_nonlinear(params: &Value) -> Result<StochasticControlModel> {
    let name = "multiplicative_nonlinear";
    let p = Params::new(name, params, &["d", "state_var", "obs_var", "prior_mean", "prior_cov"])?;
    let d = p.usize("d", 1)?;
    let state_noise = gaussian(vec![1.0; d], &(DMatrix::identity(d, d) * p.f64("state_var", 0.04)?))?;
    let obs_noise = gaussian(vec![1.0; d], &(DMatrix::identity(d, d) * p.f64("obs_var", 0.04)?))?;
    let f: Arc<super::control::PairFn> = Arc::new(|x: &[f64], a: &[f64]| {
        x.iter().zip(a).map(|(x, a)| 1.0 + 0.5 * x * x + a * a).collect()
    });
    let g: Arc<super::control::VecFn> = Arc::new(|x: &[f64]| x.iter().map(|x| 1.0 + x * x).collect());
    let (fc, gc, g0) = (f.clone(), g.clone(), g.clone());
    let hadamard = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(a, b)| a * b).collect() };
    ModelParts {
        name: name.into(),
        dims: Dims {
            state: d,
            obs: d,
            action: d,
            state_noise: d,
            obs_noise: d,
        },
        transition: Arc::new(move |x: &[f64], a: &[f64], xi: &[f64]| hadamard(xi, &fc(x, a))),
        observation: ObservationMap::NextState(Arc::new(move |_a: &[f64], xn: &[f64], eta: &[f64]| hadamard(eta, &gc(xn)))),
        initial_observation: Arc::new(move |x: &[f64], eta: &[f64]| hadamard(eta, &g0(x))),
        state_noise,
        obs_noise,
        initial_belief: prior(&p, d, 0.0, 1.0)?,
        transition_structure: TransitionStructure::Multiplicative(f),
        observation_structure: ObservationStructure::Multiplicative(g),
        meta: meta(name, params, None),
    }
    .build()
}

fn arctan_example(params: &Value) -> Result<StochasticControlModel> {
    let name = "arctan_example";
    let p = Params::new(name, params, &["state_var", "obs_var", "prior_mean", "prior_cov"])?;
    let state_noise = gaussian(vec![0.0], &DMatrix::from_element(1, 1, p.f64("state_var", 1.0)?))?;
    let obs_noise = gaussian(vec![0.0], &DMatrix::from_element(1, 1, p.f64("obs_var", 0.25)?))?;
    let (observation, initial_observation) = identity_obs(1);
    ModelParts {
        name: name.into(),
        dims: Dims {
            state: 1,
            obs: 1,
            action: 1,
            state_noise: 1,
            obs_noise: 1,
        },
        transition: Arc::new(|x: &[f64], a: &[f64], xi: &[f64]| {
            vec![(x[0] * x[0] + 1.0) * (a[0] * a[0] + 1.0) * xi[0].atan()]
        }),
        observation,
        initial_observation,
        state_noise,
        obs_noise,
        initial_belief: prior(&p, 1, 0.0, 1.0)?,
        transition_structure: TransitionStructure::General,
        observation_structure: ObservationStructure::Linear {
            g: DMatrix::identity(1, 1),
        },
        meta: meta(name, params, None),
    }
    .build()
}

fn delta_counterexample(params: &Value) -> Result<StochasticControlModel> {
    let name = "delta_noise_counterexample";
    let p = Params::new(name, params, &["prior_mean", "prior_cov"])?;
    let (observation, initial_observation) = identity_obs(1);
    ModelParts {
        name: name.into(),
        dims: Dims {
            state: 1,
            obs: 1,
            action: 1,
            state_noise: 1,
            obs_noise: 1,
        },
        transition: Arc::new(|x: &[f64], _a: &[f64], xi: &[f64]| vec![x[0] + xi[0]]),
        observation,
        initial_observation,
        state_noise: NoiseDistribution::point_mass(vec![0.0])?,
        obs_noise: NoiseDistribution::point_mass(vec![0.0])?,
        initial_belief: prior(&p, 1, 0.0, 1.0)?,
        transition_structure: TransitionStructure::Linear {
            f1: DMatrix::identity(1, 1),
            f2: DMatrix::zeros(1, 1),
        },
        observation_structure: ObservationStructure::Linear {
            g: DMatrix::identity(1, 1),
        },
        meta: meta(
            name,
            params,
            Some(NonCompliance::MissingDensity {
                noise: "state and observation".into(),
            }),
        ),
    }
    .build()
}

/// Unit vector orthogonal to `(1, …, 1)` used as the shift direction of the
/// singular-Gaussian counterexample.
pub fn singular_shift_direction(n: usize) -> Vec<f64> {
    let mut z = vec![0.0; n];
    z[0] = std::f64::consts::FRAC_1_SQRT_2;
    z[1] = -std::f64::consts::FRAC_1_SQRT_2;
    z
}

fn singular_gaussian(params: &Value) -> Result<StochasticControlModel> {
    let name = "singular_gaussian_counterexample";
    let p = Params::new(name, params, &["n", "prior_mean", "prior_cov"])?;
    let n = p.usize("n", 2)?;
    if n < 2 {
        return Err(Error::param(format!("{name}: n must be at least 2")));
    }
    let sigma = DMatrix::from_element(n, n, 1.0);
    let z = singular_shift_direction(n);
    let zc = z.clone();
    let (observation, initial_observation) = identity_obs(n);
    ModelParts {
        name: name.into(),
        dims: Dims {
            state: n,
            obs: n,
            action: 1,
            state_noise: n,
            obs_noise: n,
        },
        transition: Arc::new(move |x: &[f64], a: &[f64], xi: &[f64]| {
            (0..x.len()).map(|j| x[j] + a[0] * zc[j] + xi[j]).collect()
        }),
        observation,
        initial_observation,
        state_noise: gaussian(vec![0.0; n], &sigma)?,
        obs_noise: gaussian(vec![0.0; n], &sigma)?,
        initial_belief: prior(&p, n, 0.0, 1.0)?,
        transition_structure: TransitionStructure::Linear {
            f1: DMatrix::identity(n, n),
            f2: DMatrix::from_column_slice(n, 1, &z),
        },
        observation_structure: ObservationStructure::Linear {
            g: DMatrix::identity(n, n),
        },
        meta: meta(
            name,
            params,
            Some(NonCompliance::MissingDensity {
                noise: "state and observation".into(),
            }),
        ),
    }
    .build()
}

/// JSON document describing a model by catalog name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Dims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flavor: Option<Flavor>,
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBlock {
    pub state: NoiseSpec,
    pub observation: NoiseSpec,
}

impl ModelDocument {
    pub fn of(model: &StochasticControlModel) -> Self {
        Self {
            name: model.meta().catalog.clone().unwrap_or_else(|| model.name().to_string()),
            dims: Some(model.dims()),
            flavor: Some(model.flavor()),
            params: model.meta().params.clone(),
            noise: Some(NoiseBlock {
                state: model.state_noise().spec().clone(),
                observation: model.obs_noise().spec().clone(),
            }),
        }
    }

    /// Builds the model; declared `dims`/`flavor` must agree with the
    /// catalog entry, and a `noise` block overrides the catalog noises for
    /// entries that accept overrides.
    pub fn build(&self) -> Result<StochasticControlModel> {
        let mut params = match &self.params {
            Value::Null => Map::new(),
            Value::Object(m) => m.clone(),
            _ => return Err(Error::param("model params must be a JSON object")),
        };
        if let Some(noise) = &self.noise {
            params.insert("state_noise".into(), serde_json::to_value(&noise.state)?);
            params.insert("obs_noise".into(), serde_json::to_value(&noise.observation)?);
        }
        let first = catalog_model(&self.name, &Value::Object(params.clone()));
        // entries without noise overrides: rebuild without them and compare
        let model = match first {
            Err(Error::InvalidParameter(msg)) if self.noise.is_some() && msg.contains("unknown parameter") => {
                params.remove("state_noise");
                params.remove("obs_noise");
                let m = catalog_model(&self.name, &Value::Object(params))?;
                let noise = self.noise.as_ref().expect("checked above");
                if m.state_noise().spec() != &noise.state || m.obs_noise().spec() != &noise.observation {
                    return Err(Error::param(format!(
                        "{}: noise laws are fixed for this catalog entry",
                        self.name
                    )));
                }
                m
            }
            other => other?,
        };
        if let Some(d) = self.dims {
            if d != model.dims() {
                return Err(Error::param(format!(
                    "declared dims {d:?} disagree with model dims {:?}",
                    model.dims()
                )));
            }
        }
        if let Some(f) = self.flavor {
            if f != model.flavor() {
                return Err(Error::param("declared flavor disagrees with model flavor"));
            }
        }
        Ok(model)
    }
}
