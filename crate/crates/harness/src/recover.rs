//! Recovery-sequence study on an analytic scenario.

use metamorph_core::energy::EnergyParams;
use metamorph_core::extension::{AnalyticScenario, BranchCounts};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub k: usize,
    pub energy: f64,
    /// `J_K − J`.
    pub gap: f64,
    pub beta_k: f64,
    pub c1_norm: f64,
    pub min_det: f64,
    pub branches: BranchCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTable {
    pub continuous_energy: f64,
    pub rows: Vec<RecoveryRow>,
    /// Least-squares `p` in `|J_K − J| ≈ C·K^{−p}`, when defined.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exponent: Option<f64>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || ys.iter().any(|y| !(*y > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn recovery_study(
    scenario: &AnalyticScenario,
    ks: &[usize],
    params: &EnergyParams,
) -> Result<RecoveryTable> {
    if ks.is_empty() {
        return Err(HarnessError::Validation("no K values".into()));
    }
    let j = scenario.continuous_energy(params)?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let rec = scenario.recovery_sequence(k, params)?;
        rows.push(RecoveryRow {
            k,
            energy: rec.j_k,
            gap: rec.j_k - j,
            beta_k: rec.beta_k,
            c1_norm: rec.c1_norm,
            min_det: rec.path.min_jacobian_det(),
            branches: rec.branches,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.gap.abs()).collect();
    let exponent = log_log_slope(&xs, &ys).map(|s| -s);
    Ok(RecoveryTable {
        continuous_energy: j,
        rows,
        exponent,
    })
}
