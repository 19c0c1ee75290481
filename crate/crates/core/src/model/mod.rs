pub mod catalog;
pub mod control;
pub mod diffeo;
pub mod map;
pub mod noise;

pub use catalog::{catalog_model, ModelDocument, NoiseBlock, CATALOG_NAMES};
pub use control::{
    Dims, Flavor, LinearGaussian, ModelMeta, ModelParts, NonCompliance, ObservationMap,
    ObservationStructure, StochasticControlModel, TransitionStructure,
};
pub use diffeo::{check_diffeomorphic, DiffeoReport, DiffeoTolerances, Verdict};
pub use map::ParamMap;
pub use noise::{sample_noise, NoiseDistribution, NoiseSpec};
