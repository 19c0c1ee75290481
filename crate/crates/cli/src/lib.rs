//! Config-driven experiment runner for the `beliefmdp` library.

pub mod config;
pub mod report;
pub mod tasks;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use config::{Diagnostic, Overrides};
use report::{diagnostics_json, error_json, to_pretty, RunReport, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub struct RunArgs {
    pub task: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub label: Option<String>,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

fn base_dir(config: Option<&Path>) -> PathBuf {
    config
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn invalid(diags: &[Diagnostic]) -> i32 {
    eprintln!("{}", to_pretty(&diagnostics_json(diags)));
    EXIT_INVALID
}

/// Schema and cross-field diagnostics for a config file.
pub fn validate(path: &Path) -> Vec<Diagnostic> {
    match config::read_config(Some(path)) {
        Ok(v) => config::check(v, &Overrides::default(), &base_dir(Some(path))).1,
        Err(d) => d,
    }
}

/// Runs one task and returns the process exit code.
pub fn run(args: &RunArgs) -> i32 {
    let started = Instant::now();
    let mut value = match config::read_config(args.config.as_deref()) {
        Ok(v) => v,
        Err(d) => return invalid(&d),
    };
    if let (Some(label), Some(obj)) = (&args.label, value.as_object_mut()) {
        obj.insert("label".into(), json!(label));
    }
    let overrides = Overrides {
        task: Some(args.task.clone()),
        seed: args.seed,
    };
    let (resolved, diags) = config::check(value, &overrides, &base_dir(args.config.as_deref()));
    let Some(resolved) = resolved else {
        return invalid(&diags);
    };
    if let Some(n) = args.threads {
        if n == 0 {
            return invalid(&[Diagnostic::new("--threads", "must be at least 1")]);
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let dir = args.out.join(resolved.config.task.name()).join(&resolved.config.label);
    if let Err(e) = fs::create_dir_all(&dir) {
        return invalid(&[Diagnostic::new("--out", format!("cannot create {}: {e}", dir.display()))]);
    }
    let mut report = RunReport::new(resolved.config.clone());
    let code = match tasks::run(&resolved) {
        Ok(out) => {
            for (name, bytes) in &out.files {
                if let Err(e) = fs::write(dir.join(name), bytes) {
                    return invalid(&[Diagnostic::new("--out", format!("cannot write {name}: {e}"))]);
                }
                report.outputs.push(name.clone());
            }
            report.summary = out.summary;
            report.result = out.result;
            EXIT_OK
        }
        Err(e) if e.is_numeric_failure() => {
            let err = error_json(&e);
            eprintln!("{}", to_pretty(&json!({ "status": "numeric_failure", "error": err })));
            report.status = Status::NumericFailure;
            report.error = Some(err);
            EXIT_NUMERIC
        }
        Err(e) => return invalid(&[Diagnostic::new("", error_json(&e)["message"].as_str().unwrap_or_default())]),
    };
    let timing = json!({
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
    });
    let written = fs::write(dir.join("report.json"), to_pretty(&report))
        .and_then(|_| fs::write(dir.join("timing.json"), to_pretty(&timing)));
    if let Err(e) = written {
        return invalid(&[Diagnostic::new("--out", format!("cannot write report: {e}"))]);
    }
    code
}
