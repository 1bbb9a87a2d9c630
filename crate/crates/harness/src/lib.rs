//! Files, scenarios, experiments and the command-line interface around
//! `metamorph-core`.

pub mod cli;
pub mod config;
pub mod dti;
pub mod error;
pub mod mvf;
pub mod recover;
pub mod render;
pub mod report;
pub mod sweep;
pub mod synth;
pub mod verify;

pub use error::{HarnessError, Result};
