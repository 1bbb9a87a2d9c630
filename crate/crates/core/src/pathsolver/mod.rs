//! Discrete geodesic paths by alternating registration and image updates.

mod config;
mod path;
pub mod pyramid;
mod register;

pub use config::{Optimizer, SolverConfig};
pub use path::{
    discrete_geodesic, image_update_candidate, path_energy, refine_geodesic, update_images, DiscretePath,
    GeodesicRun, Phase, TraceEntry,
};
pub use register::{register, register_from, Registration, RegistrationSummary};
