//! Images and deformations on uniform grids over `[0,1]^n`.

mod deformation;
mod grid;
mod image;

pub use deformation::{max_displacement_difference, Deformation, INVERSE_TOL};
pub(crate) use deformation::jacobian_field;
pub use grid::{derivative_stencil, GridSpec, DOMAIN_TOL};
pub use image::{
    l2_distance, l2_distance_sq, pointwise_geodesic, pointwise_sq_distances, warp, ManifoldImage,
};
