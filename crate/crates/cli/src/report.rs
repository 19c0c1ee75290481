//! Run reports and machine-readable diagnostics.

use beliefmdp::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Diagnostic, ExperimentConfig, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub library: Library,
    pub task: String,
    pub status: Status,
    /// The fully resolved config.
    pub config: ExperimentConfig,
    /// Files written next to the report.
    pub outputs: Vec<String>,
    pub summary: Value,
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Library {
    pub name: &'static str,
    pub version: &'static str,
}

impl Library {
    pub fn current() -> Self {
        Self {
            name: "beliefmdp",
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NumericFailure,
}

impl RunReport {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            library: Library::current(),
            task: config.task.name().into(),
            status: Status::Ok,
            config,
            outputs: Vec::new(),
            summary: Value::Null,
            result: Value::Null,
            error: None,
        }
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::UnknownModel(_) => "unknown_model",
        Error::WrongObservationVariant { .. } => "wrong_observation_variant",
        Error::Evaluation(_) => "evaluation",
        Error::SingularJacobian(_) => "singular_jacobian",
        Error::DegenerateUpdate { .. } => "degenerate_update",
        Error::SingularInnovation => "singular_innovation",
        Error::GridMismatch => "grid_mismatch",
        Error::UnmatchedSeeds(_) => "unmatched_seeds",
        Error::Unsupported(_) => "unsupported",
        Error::EmptyActionSet => "empty_action_set",
        Error::Assumption(_) => "assumption",
        Error::Json(_) => "json",
        Error::Io(_) => "io",
    }
}

/// Library error as JSON, with its witness when there is one.
pub fn error_json(e: &Error) -> Value {
    let mut v = json!({ "kind": kind(e), "message": e.to_string() });
    match e {
        Error::Evaluation(w) | Error::SingularJacobian(w) => v["witness"] = json!(w),
        Error::DegenerateUpdate { prior } => v["witness"] = json!({ "prior": prior.summary() }),
        _ => {}
    }
    v
}

pub fn diagnostics_json(diags: &[Diagnostic]) -> Value {
    json!({ "status": "invalid", "diagnostics": diags })
}

pub fn to_pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}
