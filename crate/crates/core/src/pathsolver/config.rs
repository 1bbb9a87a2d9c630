use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    GradientDescent,
    Lbfgs,
}

/// Controls of the alternating path solver and the registration descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Coarse-to-fine levels, finest included.
    pub levels: usize,
    pub max_outer: usize,
    /// Relative decrease of `J_K` over one outer iteration that stops the run.
    pub tol: f64,
    /// Descent iterations per registration call.
    pub max_register_iters: usize,
    /// Max-norm gradient threshold for registration.
    pub grad_tol: f64,
    pub optimizer: Optimizer,
    pub lbfgs_memory: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor of the backtracking line search.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Largest node displacement change per descent step, in grid spacings.
    pub max_step: f64,
    /// Keeps every deformation at the identity.
    pub freeze_deformations: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            levels: 2,
            max_outer: 200,
            tol: 1e-6,
            max_register_iters: 100,
            grad_tol: 1e-9,
            optimizer: Optimizer::Lbfgs,
            lbfgs_memory: 8,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
            max_step: 0.5,
            freeze_deformations: false,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.tol > 0.0
            && self.grad_tol > 0.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.max_step > 0.0;
        if !positive || self.levels < 1 || self.max_outer < 1 || self.lbfgs_memory < 1 {
            return Err(Error::Contract(format!("invalid solver config {self:?}")));
        }
        Ok(())
    }
}
