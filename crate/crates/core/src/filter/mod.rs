pub mod bayes;
mod belief;
pub mod finite;
pub mod grid_oracle;
pub mod kalman;
pub mod trajectory;

use serde::{Deserialize, Serialize};

pub use bayes::{
    bayes_update, filter_kernel_sample, observation_density, particle_step, predictive_observation,
    to_particles, FilterKernelSample, RESAMPLE_THRESHOLD,
};
pub use belief::{Belief, BeliefSummary, WEIGHT_SUM_TOL};
pub(crate) use belief::{cumulative, normalize, pick};
pub use finite::FiniteModel;
pub use grid_oracle::{grid_bayes_oracle, grid_l1_to_density, GridOracle};
pub use kalman::{kalman_step, KalmanOutput};
pub use trajectory::{simulate_filtered, write_trajectory_csv, TrajectoryRow};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMeta {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resampled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_threshold: Option<f64>,
}

impl StepMeta {
    pub fn method(name: &str) -> Self {
        Self {
            method: name.into(),
            ..Default::default()
        }
    }
}

/// One application of the Bayes operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStep {
    pub prior: Belief,
    pub action: Vec<f64>,
    pub observation: Vec<f64>,
    pub posterior: Belief,
    /// Value (finite) or density (continuous) of `R'` at the observation.
    pub predictive_likelihood: f64,
    pub meta: StepMeta,
}
