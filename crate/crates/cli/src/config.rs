//! Experiment configuration: schema, defaults, resolution and validation.

use std::path::{Path, PathBuf};

use beliefmdp::continuity::{FellerOptions, ProfileOptions, SetShape, DEFAULT_RADII};
use beliefmdp::filter::FiniteModel;
use beliefmdp::model::{DiffeoTolerances, ModelDocument, StochasticControlModel};
use beliefmdp::region::BoxRegion;
use beliefmdp::solver::{
    AssumptionMode, CostFamily, CostSpec, InventorySpec, ProbeMode, Projection, SimplexGrid, ViMode,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_LABEL: &str = "default";

const TOP_LEVEL_KEYS: [&str; 6] = ["schema_version", "seed", "label", "model", "task", "params"];

pub const TASKS: [&str; 7] = ["simulate", "filter", "diagnose", "feller", "setconv", "solve", "probe-cost"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSource>,
    #[serde(flatten)]
    pub task: TaskConfig,
}

fn default_label() -> String {
    DEFAULT_LABEL.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSource {
    /// Catalog entry by name.
    Catalog(ModelDocument),
    /// Finite tables, inline or loaded from `path` (relative to the config
    /// file).
    Finite {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<FiniteModel>,
    },
    /// The built-in finite inventory model.
    Inventory(InventorySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", content = "params", rename_all = "kebab-case")]
pub enum TaskConfig {
    Simulate(SimulateParams),
    Filter(FilterParams),
    Diagnose(DiagnoseParams),
    Feller(FellerParams),
    Setconv(SetconvParams),
    Solve(SolveParams),
    ProbeCost(ProbeParams),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Simulate(_) => "simulate",
            TaskConfig::Filter(_) => "filter",
            TaskConfig::Diagnose(_) => "diagnose",
            TaskConfig::Feller(_) => "feller",
            TaskConfig::Setconv(_) => "setconv",
            TaskConfig::Solve(_) => "solve",
            TaskConfig::ProbeCost(_) => "probe-cost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    /// Defaults to the model's own table (finite) or the inventory table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<CostFamily>,
    pub lower_bound: f64,
    pub mode: AssumptionMode,
    pub alpha: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            family: None,
            lower_bound: 0.0,
            mode: AssumptionMode::D,
            alpha: 0.95,
        }
    }
}

impl CostConfig {
    pub fn spec(&self) -> CostSpec {
        CostSpec {
            family: self.family.clone().unwrap_or(CostFamily::Model),
            lower_bound: self.lower_bound,
            mode: self.mode,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub resolution: usize,
    pub projection: Projection,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            resolution: 50,
            projection: Projection::default(),
        }
    }
}

impl GridConfig {
    pub fn build(&self, n_states: usize) -> beliefmdp::Result<SimplexGrid> {
        Ok(SimplexGrid::new(n_states, self.resolution)?.with_projection(self.projection))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    Constant { action: usize },
    UniformRandom,
    /// Greedy policy from value iteration on `grid`.
    Greedy {
        #[serde(default)]
        grid: GridConfig,
        #[serde(default = "default_vi")]
        vi: ViMode,
    },
}

fn default_vi() -> ViMode {
    ViMode::Tolerance {
        epsilon: 1e-3,
        max_sweeps: beliefmdp::solver::DEFAULT_MAX_SWEEPS,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateParams {
    pub horizon: usize,
    /// Catalog models: constant action (zeros when absent).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<Vec<f64>>,
    /// Catalog models: particle count; `None` runs the Kalman filter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    /// Finite models.
    pub policy: PolicyConfig,
    pub episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keep_trajectories: Option<usize>,
    pub cost: CostConfig,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            action: None,
            particles: None,
            policy: PolicyConfig::Constant { action: 0 },
            episodes: 1,
            keep_trajectories: None,
            cost: CostConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// One observation per step; finite models read `[k]` as an index.
    pub observations: Vec<Vec<f64>>,
    /// One action per step before each observation after the first; a
    /// single entry is repeated. Defaults to zeros.
    pub actions: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    #[default]
    Transition,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffeoConfig {
    pub param_box: BoxRegion,
    pub omega_box: BoxRegion,
    #[serde(default = "default_diffeo_res")]
    pub grid_res: usize,
    #[serde(default)]
    pub tolerances: DiffeoTolerances,
}

fn default_diffeo_res() -> usize {
    21
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseParams {
    pub kernel: KernelChoice,
    /// Map parameter `s2`; zeros when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s2: Option<Vec<f64>>,
    pub radii: Vec<f64>,
    /// Unit directions in parameter space; coordinate axes when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
    pub n_samples: usize,
    pub options: ProfileOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffeomorphic: Option<DiffeoConfig>,
}

impl Default for DiagnoseParams {
    fn default() -> Self {
        Self {
            kernel: KernelChoice::Transition,
            s2: None,
            radii: (1..=6).map(|k| 0.5f64.powi(k)).collect(),
            directions: None,
            n_samples: 20_000,
            options: ProfileOptions::default(),
            diffeomorphic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FellerParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    pub radii: Vec<f64>,
    pub dictionary_size: usize,
    pub partition_levels: usize,
    pub n_samples: usize,
    pub options: FellerOptions,
}

impl Default for FellerParams {
    fn default() -> Self {
        Self {
            x: None,
            a: None,
            radii: DEFAULT_RADII.to_vec(),
            dictionary_size: beliefmdp::continuity::DEFAULT_DICTIONARY_SIZE,
            partition_levels: beliefmdp::continuity::DEFAULT_PARTITION_LEVELS,
            n_samples: 20_000,
            options: FellerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetconvParams {
    #[serde(default)]
    pub kernel: KernelChoice,
    pub set: SetShape,
    pub s2: Vec<f64>,
    pub s2_prime: Vec<f64>,
    #[serde(default = "default_setconv_res")]
    pub resolution: usize,
}

fn default_setconv_res() -> usize {
    600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveParams {
    pub cost: CostConfig,
    pub grid: GridConfig,
    pub vi: ViMode,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            cost: CostConfig::default(),
            grid: GridConfig::default(),
            vi: default_vi(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub cost: CostConfig,
    pub c_box: BoxRegion,
    pub gamma: f64,
    pub search_box: BoxRegion,
    #[serde(default = "default_probe_res")]
    pub resolution: usize,
    #[serde(default = "default_probe_mode")]
    pub mode: ProbeMode,
}

fn default_probe_res() -> usize {
    21
}

fn default_probe_mode() -> ProbeMode {
    ProbeMode::KInf
}

/// A model ready for use.
pub enum LoadedModel {
    Equations(StochasticControlModel),
    Finite(FiniteModel),
}

/// Parsed config together with the built model.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub model: Option<LoadedModel>,
}

/// Overrides applied on top of the config file; flags win.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<String>,
    pub seed: Option<u64>,
}

pub fn read_config(path: Option<&Path>) -> Result<Value, Vec<Diagnostic>> {
    let Some(path) = path else {
        return Ok(json!({ "schema_version": SCHEMA_VERSION }));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("", format!("cannot read {}: {e}", path.display()))])?;
    serde_json::from_str(&text).map_err(|e| vec![Diagnostic::new("", format!("not valid JSON: {e}"))])
}

/// Schema and cross-field checks. Returns the resolved config when there are
/// no diagnostics.
pub fn check(mut value: Value, overrides: &Overrides, base_dir: &Path) -> (Option<Resolved>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let Some(obj) = value.as_object_mut() else {
        return (None, vec![Diagnostic::new("", "config must be a JSON object")]);
    };
    apply_overrides(obj, overrides, &mut diags);
    for k in obj.keys() {
        if !TOP_LEVEL_KEYS.contains(&k.as_str()) {
            diags.push(Diagnostic::new(k.clone(), "unknown key"));
        }
    }
    match obj.get("schema_version") {
        None => diags.push(Diagnostic::new("schema_version", "missing")),
        Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
            diags.push(Diagnostic::new("schema_version", format!("unsupported version {v}; expected {SCHEMA_VERSION}")))
        }
        _ => {}
    }
    match obj.get("seed") {
        None | Some(Value::Null) => diags.push(Diagnostic::new("seed", "seed is mandatory")),
        Some(v) if v.as_u64().is_none() => diags.push(Diagnostic::new("seed", "seed must be an unsigned 64-bit integer")),
        _ => {}
    }
    match obj.get("task").and_then(Value::as_str) {
        None => diags.push(Diagnostic::new("task", format!("missing; one of {}", TASKS.join(", ")))),
        Some(t) if !TASKS.contains(&t) => diags.push(Diagnostic::new("task", format!("unknown task `{t}`"))),
        _ => {}
    }
    if !diags.is_empty() {
        return (None, diags);
    }
    if !obj.contains_key("params") {
        obj.insert("params".into(), Value::Object(Map::new()));
    }
    let mut config: ExperimentConfig = match serde_json::from_value(value) {
        Ok(c) => c,
        Err(e) => return (None, vec![Diagnostic::new("", e.to_string())]),
    };
    let model = match resolve_model(&mut config, base_dir) {
        Ok(m) => m,
        Err(d) => return (None, vec![d]),
    };
    fill_cost_defaults(&mut config);
    crate::tasks::fill_model_defaults(&mut config, model.as_ref());
    cross_checks(&config, model.as_ref(), &mut diags);
    if diags.is_empty() {
        (Some(Resolved { config, model }), diags)
    } else {
        (None, diags)
    }
}

fn apply_overrides(obj: &mut Map<String, Value>, o: &Overrides, diags: &mut Vec<Diagnostic>) {
    if let Some(seed) = o.seed {
        obj.insert("seed".into(), json!(seed));
    }
    if let Some(task) = &o.task {
        match obj.get("task").and_then(Value::as_str) {
            Some(t) if t != task => diags.push(Diagnostic::new(
                "task",
                format!("config task `{t}` does not match subcommand `{task}`"),
            )),
            _ => {
                obj.insert("task".into(), json!(task));
            }
        }
    }
}

fn resolve_model(config: &mut ExperimentConfig, base_dir: &Path) -> Result<Option<LoadedModel>, Diagnostic> {
    let Some(src) = &mut config.model else {
        return Ok(None);
    };
    let model = match src {
        ModelSource::Catalog(doc) => LoadedModel::Equations(doc.build().map_err(|e| Diagnostic::new("model", e.to_string()))?),
        ModelSource::Finite { path, model } => {
            let m = match (path.as_ref(), model.as_ref()) {
                (_, Some(m)) => m.clone(),
                (Some(p), None) => {
                    let full: PathBuf = base_dir.join(p);
                    FiniteModel::load(&full).map_err(|e| Diagnostic::new("model.path", format!("{}: {e}", full.display())))?
                }
                (None, None) => return Err(Diagnostic::new("model", "finite model needs `path` or `model`")),
            };
            m.validate().map_err(|e| Diagnostic::new("model", e.to_string()))?;
            *model = Some(m.clone());
            LoadedModel::Finite(m)
        }
        ModelSource::Inventory(spec) => {
            let (m, _) = spec.build(0.0).map_err(|e| Diagnostic::new("model", e.to_string()))?;
            LoadedModel::Finite(m)
        }
    };
    Ok(Some(model))
}

fn fill_cost_defaults(config: &mut ExperimentConfig) {
    let inventory = match &config.model {
        Some(ModelSource::Inventory(spec)) => Some(spec.clone()),
        _ => None,
    };
    let cost = match &mut config.task {
        TaskConfig::Simulate(p) => &mut p.cost,
        TaskConfig::Solve(p) => &mut p.cost,
        _ => return,
    };
    if cost.family.is_none() {
        cost.family = Some(match &inventory {
            Some(spec) => spec.build(cost.alpha).map(|(_, c)| c.family).unwrap_or(CostFamily::Model),
            None => CostFamily::Model,
        });
    }
}

fn check_cost(path: &str, cost: &CostConfig, diags: &mut Vec<Diagnostic>) {
    if let Err(e) = cost.spec().validate() {
        diags.push(Diagnostic::new(path, e.to_string()));
    }
}

fn check_len(path: &str, v: &Option<Vec<f64>>, n: usize, diags: &mut Vec<Diagnostic>) {
    if let Some(v) = v {
        if v.len() != n {
            diags.push(Diagnostic::new(path, format!("expected length {n}, got {}", v.len())));
        }
    }
}

fn cross_checks(config: &ExperimentConfig, model: Option<&LoadedModel>, diags: &mut Vec<Diagnostic>) {
    let task = config.task.name();
    let needs_equations = matches!(task, "diagnose" | "feller" | "setconv");
    let needs_finite = task == "solve";
    match model {
        None if task != "probe-cost" => diags.push(Diagnostic::new("model", format!("task `{task}` needs a model"))),
        Some(LoadedModel::Finite(_)) if needs_equations => {
            diags.push(Diagnostic::new("model", format!("task `{task}` needs a catalog model")))
        }
        Some(LoadedModel::Equations(_)) if needs_finite => {
            diags.push(Diagnostic::new("model", "task `solve` needs a finite or inventory model"))
        }
        _ => {}
    }
    match &config.task {
        TaskConfig::Simulate(p) => {
            if let Some(LoadedModel::Finite(m)) = model {
                check_cost("params.cost", &p.cost, diags);
                if let PolicyConfig::Constant { action } = p.policy {
                    if action >= m.n_actions() {
                        diags.push(Diagnostic::new("params.policy.action", "action index out of range"));
                    }
                }
                if p.episodes == 0 {
                    diags.push(Diagnostic::new("params.episodes", "need at least one episode"));
                }
            }
            if let Some(LoadedModel::Equations(m)) = model {
                check_len("params.action", &p.action, m.dims().action, diags);
            }
        }
        TaskConfig::Filter(p) => {
            if p.observations.is_empty() {
                diags.push(Diagnostic::new("params.observations", "need at least one observation"));
            }
        }
        TaskConfig::Diagnose(p) => {
            if let Some(LoadedModel::Equations(m)) = model {
                let phi = match p.kernel {
                    KernelChoice::Transition => m.transition_map(),
                    KernelChoice::Observation => m.observation_map(),
                };
                check_len("params.s2", &p.s2, phi.param_dim(), diags);
            }
        }
        TaskConfig::Feller(p) => {
            if let Some(LoadedModel::Equations(m)) = model {
                check_len("params.x", &p.x, m.dims().state, diags);
                check_len("params.a", &p.a, m.dims().action, diags);
            }
        }
        TaskConfig::Setconv(p) => {
            if let Some(LoadedModel::Equations(m)) = model {
                let phi = match p.kernel {
                    KernelChoice::Transition => m.transition_map(),
                    KernelChoice::Observation => m.observation_map(),
                };
                check_len("params.s2", &Some(p.s2.clone()), phi.param_dim(), diags);
                check_len("params.s2_prime", &Some(p.s2_prime.clone()), phi.param_dim(), diags);
            }
        }
        TaskConfig::Solve(p) => check_cost("params.cost", &p.cost, diags),
        TaskConfig::ProbeCost(p) => {
            if let Err(e) = BoxRegion::new(p.c_box.low.clone(), p.c_box.high.clone()) {
                diags.push(Diagnostic::new("params.c_box", e.to_string()));
            }
            if let Err(e) = BoxRegion::new(p.search_box.low.clone(), p.search_box.high.clone()) {
                diags.push(Diagnostic::new("params.search_box", e.to_string()));
            }
        }
    }
}
