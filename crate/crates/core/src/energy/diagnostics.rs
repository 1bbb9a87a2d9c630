use rayon::prelude::*;

use super::density::{w3, DensityParams};
use super::regularizer::{DiffOperator, RegParams};
use crate::error::{Error, Result};
use crate::field::{jacobian_field, Deformation, GridSpec};
use crate::sum::pairwise_sum;

fn strain_energy(jac: &nalgebra::Matrix3<f64>, n: usize, p: &DensityParams) -> f64 {
    let du = jac - nalgebra::Matrix3::identity();
    let du = du.view((0, 0), (n, n));
    let eps = (du + du.transpose()) * 0.5;
    0.5 * p.lambda * eps.trace().powi(2) + p.mu * (&eps * &eps).trace()
}

/// `∫ L[v,v] = ∫ (λ/2)(tr ε[v])² + μ tr(ε[v]²) + γ|Dᵐv|²` for a node
/// vector field (no boundary condition required).
pub fn dissipation(
    grid: &GridSpec,
    v: &[f64],
    density: &DensityParams,
    reg: &RegParams,
) -> Result<f64> {
    let n = grid.dim();
    if v.len() != grid.len() * n {
        return Err(Error::GridMismatch(format!(
            "velocity of {} reals for {} nodes",
            v.len(),
            grid.len()
        )));
    }
    let jac = jacobian_field(grid, v);
    let terms: Vec<f64> = jac
        .par_iter()
        .enumerate()
        .map(|(i, j)| grid.weight(i) * strain_energy(j, n, density))
        .collect();
    let higher = DiffOperator::new(grid, reg.m).seminorm_sq(v, n);
    Ok(pairwise_sum(&terms) + reg.gamma * higher)
}

/// `|K²∫W(𝟙 + Du/K) − ∫(λ/2)(tr ε[u])² + μ tr(ε[u]²)|`.
pub fn taylor_residual(u: &Deformation, k: usize, density: &DensityParams) -> Result<f64> {
    if k == 0 {
        return Err(Error::Contract("K must be positive".into()));
    }
    let grid = u.grid();
    let n = grid.dim();
    let kf = k as f64;
    let scaled: Vec<f64> = u.displacement().iter().map(|v| v / kf).collect();
    let jac_u = jacobian_field(grid, u.displacement());
    let jac_s = jacobian_field(grid, &scaled);
    let full: Result<Vec<f64>> = jac_s
        .par_iter()
        .enumerate()
        .map(|(i, j)| Ok(grid.weight(i) * w3(j, density)?))
        .collect();
    let quad: Vec<f64> = jac_u
        .iter()
        .enumerate()
        .map(|(i, j)| grid.weight(i) * strain_energy(j, n, density))
        .collect();
    Ok((kf * kf * pairwise_sum(&full?) - pairwise_sum(&quad)).abs())
}

/// Discrete `‖φ − Id‖_{Hᵐ}` against `(R + R²)^{1/2}`.
pub fn theta_diagnostic(phi: &Deformation, r_value: f64, reg: &RegParams) -> (f64, f64) {
    let grid = phi.grid();
    let n = grid.dim();
    let u = phi.displacement();
    let norm_sq: f64 = (0..=reg.m)
        .map(|j| DiffOperator::new(grid, j).seminorm_sq(u, n))
        .sum();
    let r = r_value.max(0.0);
    (norm_sq.sqrt(), (r + r * r).sqrt())
}
