//! Run configuration: a TOML file with `[density]`, `[regularizer]`,
//! `[coupling]`, `[solver]` and `[sweep]` sections, all optional.

use std::path::Path;

use metamorph_core::energy::{CouplingParams, DensityParams, EnergyParams, RegParams};
use metamorph_core::pathsolver::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub lambda: f64,
    pub mu: f64,
    /// Defaults to `mu / 10`.
    pub beta: Option<f64>,
    /// Defaults to `lambda / 2`.
    pub kappa: Option<f64>,
}

impl Default for DensitySection {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu: 1.0,
            beta: None,
            kappa: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerSection {
    pub gamma: f64,
    pub m: usize,
    pub pragmatic: bool,
}

impl Default for RegularizerSection {
    fn default() -> Self {
        let r = RegParams::default();
        Self {
            gamma: r.gamma,
            m: r.m,
            pragmatic: r.pragmatic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        let c = CouplingParams::default();
        Self {
            delta: c.delta,
            epsilon: c.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub ks: Vec<usize>,
    /// Comparison times are `j / compare_steps`.
    pub compare_steps: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            ks: vec![2, 4, 8, 16, 32],
            compare_steps: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub density: DensitySection,
    pub regularizer: RegularizerSection,
    pub coupling: CouplingSection,
    pub solver: SolverConfig,
    pub sweep: SweepSection,
}

impl Config {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| HarnessError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
        Self::from_toml(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn energy_params(&self) -> Result<EnergyParams> {
        let d = &self.density;
        let mut density = DensityParams::new(d.lambda, d.mu)?;
        if let Some(b) = d.beta {
            density.beta = b;
        }
        if let Some(k) = d.kappa {
            density.kappa = k;
        }
        density.validate()?;
        let mut reg = RegParams::new(self.regularizer.gamma, self.regularizer.m);
        reg.pragmatic = self.regularizer.pragmatic;
        let coupling = CouplingParams {
            delta: self.coupling.delta,
            epsilon: self.coupling.epsilon,
        };
        coupling.validate()?;
        Ok(EnergyParams {
            density,
            reg,
            coupling,
        })
    }

    /// Parameters validated for spatial dimension `n`.
    pub fn energy_params_for(&self, n: usize) -> Result<EnergyParams> {
        let p = self.energy_params()?;
        p.validate(n)?;
        self.solver.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_fill_defaults() {
        let c = Config::from_toml("[density]\nlambda = 2.0\n[solver]\nlevels = 1\n").unwrap();
        let p = c.energy_params().unwrap();
        assert_eq!(p.density.lambda, 2.0);
        assert_eq!(p.density.kappa, 1.0);
        assert_eq!(p.density.beta, 0.1);
        assert_eq!(c.solver.levels, 1);
        assert_eq!(c.solver.max_outer, SolverConfig::default().max_outer);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[density]\nlamda = 2.0\n").is_err());
        assert!(Config::from_toml("[extra]\n").is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }
}
