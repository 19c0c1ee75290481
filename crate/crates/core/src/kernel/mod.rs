pub mod aumann;
pub mod density;
pub mod estimate;
pub mod pushforward;

pub use aumann::{build_aumann_map, AumannMap, KernelFamily};
pub use density::{density_via_change_of_variables, gridded_density, image_box, DEFAULT_GRID_RES};
pub use estimate::{KernelEstimate, KernelRepr, KernelSource};
pub use pushforward::{
    joint_kernel, observation_kernel, observation_kernel1, observation_seed, pushforward_kernel,
    transition_kernel,
};
