//! Continuity diagnostics for kernels: total-variation and bounded-Lipschitz
//! distances, continuity profiles in the parameter, the semi-uniform Feller
//! modulus, and convergence of image sets.

pub mod bl;
pub mod feller;
pub mod profile;
pub mod setconv;
pub mod tv;

pub use bl::{bl_distance, bl_distance_with, BlEstimate, Dictionary, TestFunction, DEFAULT_DICTIONARY_SIZE};
pub use feller::{
    feller_modulus, feller_modulus_with, FellerModulusReport, FellerOptions, YPartition, DEFAULT_PARTITION_LEVELS,
    DEFAULT_RADII,
};
pub use profile::{
    continuity_profile, continuity_profile_with, ContinuityProfile, ContinuityVerdict, ProfileOptions,
    DISCONTINUITY_FLOOR,
};
pub use setconv::{set_convergence_check, SetConvergenceReport, SetShape};
pub use tv::{tv_distance, tv_distance_with, DistanceEstimate, TvMode, ATOM_TOL};
