//! JSON run reports. Wall-clock timings go to a separate `timing.json` so
//! that reports stay byte-identical across runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use metamorph_core::energy::{theta_diagnostic, EnergyParams, PairEnergy};
use metamorph_core::pathsolver::{DiscretePath, GeodesicRun, RegistrationSummary, TraceEntry};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::sweep::SweepTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub energy: PairEnergy,
    pub min_det: f64,
    /// `(‖φ − Id‖_{Hᵐ}, (R + R²)^{1/2})`.
    pub theta: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub k: usize,
    pub energy: f64,
    pub min_det: f64,
    pub steps: Vec<StepReport>,
}

impl PathReport {
    pub fn new(path: &DiscretePath, params: &EnergyParams) -> Self {
        let steps = path
            .deformations()
            .iter()
            .zip(path.energies())
            .enumerate()
            .map(|(i, (phi, e))| {
                let (a, b) = theta_diagnostic(phi, e.total, &params.reg);
                StepReport {
                    step: i + 1,
                    energy: *e,
                    min_det: phi.min_jacobian_det(),
                    theta: [a, b],
                }
            })
            .collect();
        Self {
            k: path.k(),
            energy: path.energy(),
            min_det: path.min_jacobian_det(),
            steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub outer_iterations: usize,
    pub converged: bool,
    pub monotone: bool,
    pub trace: Vec<TraceEntry>,
    pub registrations: Vec<RegistrationSummary>,
}

impl SolveReport {
    pub fn new(run: &GeodesicRun) -> Self {
        Self {
            outer_iterations: run.outer_iterations,
            converged: run.converged,
            monotone: run.is_monotone(),
            trace: run.trace.clone(),
            registrations: run.registrations.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config: Config,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<PathReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub solve: Option<SolveReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sweep: Option<SweepTable>,
    /// Command-specific values.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub values: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            path: None,
            solve: None,
            sweep: None,
            values: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.values.insert(key.to_string(), v);
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Format(format!("report: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| HarnessError::io(path.display().to_string(), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
        serde_json::from_str(&s).map_err(|e| HarnessError::Format(format!("report: {e}")))
    }
}

/// Named wall-clock phases in seconds.
#[derive(Debug)]
pub struct Timing {
    start: Instant,
    last: Instant,
    phases: Vec<(String, f64)>,
}

impl Default for Timing {
    fn default() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            phases: Vec::new(),
        }
    }
}

impl Timing {
    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.phases.push((name.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut m = serde_json::Map::new();
        for (k, v) in &self.phases {
            m.insert(k.clone(), (*v).into());
        }
        m.insert("total".into(), self.start.elapsed().as_secs_f64().into());
        let s = serde_json::to_string_pretty(&m).expect("timing serializes");
        std::fs::write(path, s + "\n").map_err(|e| HarnessError::io(path.display().to_string(), e))
    }
}
