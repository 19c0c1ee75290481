//! Belief-MDP solver for finite hidden-state models: cost lifting, value
//! iteration on a simplex grid, optimal action sets, policy simulation, and
//! numerical probes of (K-)inf-compactness.

pub mod cost;
mod extended;
pub mod grid;
pub mod inventory;
pub mod kinf;
pub mod simulate;
pub mod vi;

pub use cost::{lift_cost, AssumptionMode, CostFamily, CostSpec, DemandLaw, LiftedCost};
pub use grid::{Projection, SimplexGrid};
pub use inventory::InventorySpec;
pub use kinf::{kinf_compact_probe, theoretical_action_bound, KinfReport, KinfVerdict, ProbeMode, SublevelWitness};
pub use simulate::{paired_difference, simulate_policy, Policy, SimStep, SimulationReport};
pub use vi::{
    bellman_backup, optimal_action_set, value_iteration, Backup, FiniteProblem, SweepLog, ValueFunction, ViMode,
    ARGMIN_TOL, DEFAULT_MAX_SWEEPS,
};
