//! Refinement study over an increasing sequence of step counts `K`.

use metamorph_core::energy::EnergyParams;
use metamorph_core::extension::{image_extension, resample_path};
use metamorph_core::field::{l2_distance, ManifoldImage};
use metamorph_core::pathsolver::{discrete_geodesic, refine_geodesic, GeodesicRun, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub energy: f64,
    pub min_det: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub monotone: bool,
    /// `d₂` to the previous row's extended path at each comparison time.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub distances: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_distance: Option<f64>,
    /// `|J_K − J_{K'}|` for the previous row's `K'`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub energy_difference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub compare_times: Vec<f64>,
    pub warm_start: bool,
    pub rows: Vec<SweepRow>,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl SweepTable {
    pub fn distances_decreasing(&self) -> bool {
        let d: Vec<f64> = self.rows.iter().filter_map(|r| r.max_distance).collect();
        strictly_decreasing(&d)
    }

    pub fn differences_decreasing(&self) -> bool {
        let d: Vec<f64> = self.rows.iter().filter_map(|r| r.energy_difference).collect();
        strictly_decreasing(&d)
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub ks: Vec<usize>,
    pub compare_steps: usize,
    /// Starts each `K` from the previous path sampled at `j/K`.
    pub warm_start: bool,
}

/// Solves for every `K` and compares consecutive extended paths.
pub fn sweep(
    start: &ManifoldImage,
    end: &ManifoldImage,
    options: &SweepOptions,
    params: &EnergyParams,
    config: &SolverConfig,
) -> Result<(SweepTable, Vec<GeodesicRun>)> {
    if options.ks.is_empty() || options.ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::Validation(format!(
            "sweep K values {:?} must be increasing",
            options.ks
        )));
    }
    if options.compare_steps < 1 {
        return Err(HarnessError::Validation("compare_steps must be positive".into()));
    }
    let times: Vec<f64> = (0..=options.compare_steps)
        .map(|j| j as f64 / options.compare_steps as f64)
        .collect();
    let mut runs: Vec<GeodesicRun> = Vec::new();
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut previous_images: Vec<ManifoldImage> = Vec::new();
    for &k in &options.ks {
        let run = match runs.last() {
            Some(prev) if options.warm_start => {
                refine_geodesic(resample_path(&prev.path, k, params)?, params, config)?
            }
            _ => discrete_geodesic(start, end, k, params, config)?,
        };
        let images: Vec<ManifoldImage> = times
            .iter()
            .map(|&t| image_extension(&run.path, t))
            .collect::<metamorph_core::Result<_>>()?;
        let mut row = SweepRow {
            k,
            energy: run.path.energy(),
            min_det: run.path.min_jacobian_det(),
            outer_iterations: run.outer_iterations,
            converged: run.converged,
            monotone: run.is_monotone(),
            distances: Vec::new(),
            max_distance: None,
            energy_difference: None,
        };
        if let Some(prev) = rows.last() {
            row.distances = images
                .iter()
                .zip(&previous_images)
                .map(|(a, b)| l2_distance(a, b))
                .collect::<metamorph_core::Result<_>>()?;
            row.max_distance = Some(row.distances.iter().cloned().fold(0.0, f64::max));
            row.energy_difference = Some((row.energy - prev.energy).abs());
        }
        rows.push(row);
        previous_images = images;
        runs.push(run);
    }
    Ok((
        SweepTable {
            compare_times: times,
            warm_start: options.warm_start,
            rows,
        },
        runs,
    ))
}
