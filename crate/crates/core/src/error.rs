use thiserror::Error;

use crate::manifold::ManifoldKind;

/// Errors raised by the metamorphosis kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("manifold kind mismatch: {left} vs {right}")]
    KindMismatch { left: ManifoldKind, right: ManifoldKind },

    #[error("invalid point for {kind}: {reason}")]
    InvalidPoint { kind: ManifoldKind, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("position {position:?} leaves the domain by {overshoot:e}")]
    OutOfDomain { position: Vec<f64>, overshoot: f64 },

    #[error("deformation inversion failed at node {node}: residual {residual:e}")]
    InversionFailure { node: usize, residual: f64 },

    #[error("inadmissible deformation: {0}")]
    Inadmissible(String),

    #[error("matrix outside GL+(n): det = {0}")]
    Domain(f64),

    #[error("scenario rejected: {0}")]
    ScenarioRejected(String),

    #[error("expression error: {0}")]
    Expression(String),
}

pub type Result<T> = std::result::Result<T, Error>;
