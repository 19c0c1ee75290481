use std::path::PathBuf;
use std::process::ExitCode;

use beliefmdp_cli::{config::TASKS, report::to_pretty, run, validate, RunArgs, EXIT_INVALID, EXIT_OK};
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "beliefmdp", version, about = "Seeded, config-driven belief-MDP experiments")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; results go to <out>/<task>/<label>/.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config label.
    #[arg(long, global = true)]
    label: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories with the filter in the loop.
    Simulate,
    /// Run the Bayes filter over given observations.
    Filter,
    /// Continuity profile of a model kernel in total variation and BL.
    Diagnose,
    /// Semi-uniform Feller modulus of the observation-transition kernel.
    Feller,
    /// Convergence of image sets under parameter changes.
    Setconv,
    /// Value iteration on the belief simplex.
    Solve,
    /// Numerical (K-)inf-compactness probe of a cost.
    ProbeCost,
    /// Check a config without running it.
    Validate {
        /// Config path (alternative to --config).
        path: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let task = match &cli.command {
        Command::Simulate => TASKS[0],
        Command::Filter => TASKS[1],
        Command::Diagnose => TASKS[2],
        Command::Feller => TASKS[3],
        Command::Setconv => TASKS[4],
        Command::Solve => TASKS[5],
        Command::ProbeCost => TASKS[6],
        Command::Validate { path } => {
            let Some(path) = path.as_ref().or(cli.config.as_ref()) else {
                eprintln!("validate needs a config path");
                return ExitCode::from(EXIT_INVALID as u8);
            };
            let diags = validate(path);
            println!("{}", to_pretty(&json!({ "config": path, "diagnostics": diags })).trim_end());
            return ExitCode::from(if diags.is_empty() { EXIT_OK } else { EXIT_INVALID } as u8);
        }
    };
    let code = run(&RunArgs {
        task: task.into(),
        config: cli.config,
        seed: cli.seed,
        label: cli.label,
        out: cli.out,
        threads: cli.threads,
    });
    ExitCode::from(code as u8)
}
