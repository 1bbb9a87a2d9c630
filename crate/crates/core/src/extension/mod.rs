//! Continuous-time extension of discrete paths and the recovery sequence
//! of analytic scenarios.

mod bundle;
mod expr;
mod scenario;

pub use bundle::{
    image_extension, resample_path, transport_map, velocities, verify_admissibility, AdmissibilityReport,
    ExtensionBundle, TimeGrid,
};
pub use expr::Expr;
pub use scenario::{
    flow_point, integrate_flow, AnalyticScenario, BranchCounts, ExprImage, ExprVelocity,
    GridImage, ImageField, RateSource, Recovery, TransportedImage, VelocityField, ZeroVelocity,
};
