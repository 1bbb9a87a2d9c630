//! Hyperelastic pair energy, its gradient, and the dissipation diagnostics.

mod density;
mod diagnostics;
mod pair;
mod regularizer;

pub use density::{density_gradient, density_w, polyconvex_lift, quadratic_form, DensityParams};
pub use diagnostics::{dissipation, taylor_residual, theta_diagnostic};
pub use pair::{pair_energy, pair_energy_gradient, CouplingParams, EnergyParams, PairEnergy};
pub(crate) use pair::data_misfit;
pub use regularizer::{regularizer_with_gradient, DiffOperator, RegParams};
