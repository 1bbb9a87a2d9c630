//! Time-discrete geodesic paths between manifold-valued images under the
//! metamorphosis model, together with the temporal extension operators used
//! to study their convergence.

pub mod energy;
pub mod error;
pub mod extension;
pub mod field;
pub mod manifold;
pub mod pathsolver;
pub mod sum;

pub use error::{Error, Result};
pub use manifold::{ManifoldKind, Point, Tangent};
