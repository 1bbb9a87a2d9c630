use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::density::{dw3, w3, DensityParams};
use super::regularizer::{regularizer_with_gradient, RegParams};
use crate::error::{Error, Result};
use crate::field::{derivative_stencil, jacobian_field, Deformation, GridSpec, ManifoldImage};
use crate::sum::pairwise_sum;

/// Data weight `1/δ` and admissibility bound `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub delta: f64,
    pub epsilon: f64,
}

impl CouplingParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta > 0.0 && self.epsilon > 0.0 {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "delta = {}, epsilon = {} must be positive",
                self.delta, self.epsilon
            )))
        }
    }
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self {
            delta: 0.1,
            epsilon: 0.1,
        }
    }
}

/// Every model parameter of the pair energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub density: DensityParams,
    pub reg: RegParams,
    pub coupling: CouplingParams,
}

impl EnergyParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.density.validate()?;
        self.reg.validate(n)?;
        self.coupling.validate()
    }
}

/// The terms of `R(I, Ĩ, φ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEnergy {
    pub elastic: f64,
    pub regularizer: f64,
    /// `(1/δ)·d₂²(I, Ĩ∘φ)`.
    pub data: f64,
    pub total: f64,
}

impl PairEnergy {
    fn new(elastic: f64, regularizer: f64, data: f64) -> Self {
        Self {
            elastic,
            regularizer,
            data,
            total: elastic + regularizer + data,
        }
    }
}

/// `∫W(Dφ)` by trapezoidal quadrature of the node Jacobians.
pub(crate) fn elastic_energy(
    grid: &GridSpec,
    disp: &[f64],
    p: &DensityParams,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let jac = jacobian_field(grid, disp);
    let terms: Result<Vec<f64>> = jac
        .par_iter()
        .enumerate()
        .map(|(i, j)| Ok(grid.weight(i) * w3(j, p)?))
        .collect();
    let value = pairwise_sum(&terms?);
    if let Some(g) = grad {
        let n = grid.dim();
        for (i, j) in jac.iter().enumerate() {
            let dw = dw3(j, p)? * grid.weight(i);
            let mi = grid.multi_index(i);
            for b in 0..n {
                let stride = grid.stride(b) as isize;
                for (off, c) in derivative_stencil(mi[b], grid.shape()[b], grid.spacing(b)) {
                    if c == 0.0 {
                        continue;
                    }
                    let nb = (i as isize + off * stride) as usize;
                    for a in 0..n {
                        g[nb * n + a] += c * dw[(a, b)];
                    }
                }
            }
        }
    }
    Ok(value)
}

fn check_inputs(reference: &ManifoldImage, moving: &ManifoldImage, phi: &Deformation) -> Result<()> {
    reference.ensure_compatible(moving)?;
    reference.grid().ensure_same(phi.grid())?;
    phi.check_admissible()
}

/// Squared data misfit `Σ_x w_x d²(I(x), Ĩ(φ(x)))` and, optionally, its
/// gradient in the node positions `φ(x)`.
pub(crate) fn data_misfit(
    reference: &ManifoldImage,
    moving: &ManifoldImage,
    positions: &[f64],
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let grid = reference.grid();
    let n = grid.dim();
    let kind = reference.kind();
    let d = kind.payload_dim();
    let per_node: Result<Vec<(f64, [f64; 3])>> = positions
        .par_chunks_exact(n)
        .enumerate()
        .map(|(i, p)| {
            let w = grid.weight(i);
            let target = reference.value(i);
            let mut g = [0.0; 3];
            if with_grad {
                let (q, dq) = moving.sample_with_gradient(p)?;
                let dist = kind.dist(&q, target);
                let mut l = vec![0.0; d];
                kind.log_into(&q, target, &mut l);
                for a in 0..n {
                    g[a] = -2.0 * w * kind.inner(&q, &l, &dq[a]);
                }
                Ok((w * dist * dist, g))
            } else {
                let q = moving.sample(p)?;
                let dist = kind.dist(&q, target);
                Ok((w * dist * dist, g))
            }
        })
        .collect();
    let per_node = per_node?;
    let values: Vec<f64> = per_node.iter().map(|v| v.0).collect();
    let grad = if with_grad {
        per_node.iter().flat_map(|v| v.1[..n].to_vec()).collect()
    } else {
        Vec::new()
    };
    Ok((pairwise_sum(&values), grad))
}

/// `R(I, Ĩ, φ) = ∫W(Dφ) + γ|Dᵐφ|² dx + (1/δ)·d₂²(I, Ĩ∘φ)`.
pub fn pair_energy(
    reference: &ManifoldImage,
    moving: &ManifoldImage,
    phi: &Deformation,
    params: &EnergyParams,
) -> Result<PairEnergy> {
    check_inputs(reference, moving, phi)?;
    let grid = phi.grid();
    let elastic = elastic_energy(grid, phi.displacement(), &params.density, None)?;
    let (reg, _) = regularizer_with_gradient(grid, phi.displacement(), &params.reg);
    let (misfit, _) = data_misfit(reference, moving, &phi.positions(), false)?;
    Ok(PairEnergy::new(elastic, reg, misfit / params.coupling.delta))
}

/// `R` together with its gradient in the node displacements; boundary
/// entries are zero.
pub fn pair_energy_gradient(
    reference: &ManifoldImage,
    moving: &ManifoldImage,
    phi: &Deformation,
    params: &EnergyParams,
) -> Result<(PairEnergy, Vec<f64>)> {
    check_inputs(reference, moving, phi)?;
    let grid = phi.grid();
    let n = grid.dim();
    let disp = phi.displacement();
    let mut grad = vec![0.0; disp.len()];
    let elastic = elastic_energy(grid, disp, &params.density, Some(&mut grad))?;
    let (reg, reg_grad) = regularizer_with_gradient(grid, disp, &params.reg);
    let (misfit, data_grad) = data_misfit(reference, moving, &phi.positions(), true)?;
    let inv_delta = 1.0 / params.coupling.delta;
    for i in 0..grad.len() {
        grad[i] += reg_grad[i] + inv_delta * data_grad[i];
    }
    for i in 0..grid.len() {
        if grid.is_boundary(i) {
            grad[i * n..(i + 1) * n].iter_mut().for_each(|g| *g = 0.0);
        }
    }
    Ok((PairEnergy::new(elastic, reg, misfit * inv_delta), grad))
}
