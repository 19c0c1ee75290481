//! Belief-MDP reduction for partially observable control models given by
//! stochastic equations: kernels, Bayes filters, continuity diagnostics and
//! a value-iteration solver over the belief simplex.

pub mod continuity;
pub mod error;
pub mod filter;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod region;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use filter::Belief;
pub use model::{catalog_model, NoiseDistribution, StochasticControlModel};
