use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::config::{Optimizer, SolverConfig};
use super::pyramid;
use crate::energy::{pair_energy, pair_energy_gradient, EnergyParams, PairEnergy};
use crate::error::Result;
use crate::field::{Deformation, ManifoldImage};

/// Outcome of one registration.
#[derive(Clone, Debug)]
pub struct Registration {
    pub phi: Deformation,
    pub energy: PairEnergy,
    pub iterations: usize,
    /// Max-norm of the final gradient.
    pub gradient_norm: f64,
    /// The line search failed to find an admissible descent step.
    pub stalled: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSummary {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub stalled: bool,
}

impl Registration {
    pub fn summary(&self) -> RegistrationSummary {
        RegistrationSummary {
            iterations: self.iterations,
            gradient_norm: self.gradient_norm,
            stalled: self.stalled,
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl Memory {
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if self.pairs.len() == self.cap {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }
}

/// Single-level descent on `R(I, Ĩ, ·)` starting from the better of `init`
/// and the identity; the energy never exceeds `R(I, Ĩ, Id)`.
pub fn register_from(
    reference: &ManifoldImage,
    moving: &ManifoldImage,
    init: Option<&Deformation>,
    params: &EnergyParams,
    config: &SolverConfig,
) -> Result<Registration> {
    reference.ensure_compatible(moving)?;
    let grid = reference.grid().clone();
    let eps = params.coupling.epsilon;
    let id = Deformation::identity(grid.clone(), eps)?;
    let mut phi = id.clone();
    let mut energy = pair_energy(reference, moving, &id, params)?;
    if let Some(start) = init {
        let start = start.with_epsilon(eps);
        if let Ok(e) = pair_energy(reference, moving, &start, params) {
            if e.total < energy.total {
                phi = start;
                energy = e;
            }
        }
    }
    if energy.total == 0.0 {
        return Ok(Registration {
            phi,
            energy,
            iterations: 0,
            gradient_norm: 0.0,
            stalled: false,
        });
    }
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let max_step = config.max_step * h;
    let (_, mut grad) = pair_energy_gradient(reference, moving, &phi, params)?;
    let mut memory = Memory {
        pairs: VecDeque::new(),
        cap: config.lbfgs_memory,
    };
    let mut stalled = false;
    let mut iterations = 0;
    while iterations < config.max_register_iters {
        if max_abs(&grad) <= config.grad_tol {
            break;
        }
        iterations += 1;
        let mut restarted = false;
        let accepted = loop {
            let mut dir = match config.optimizer {
                Optimizer::Lbfgs if !memory.pairs.is_empty() => memory.direction(&grad),
                _ => grad.iter().map(|g| -g).collect(),
            };
            let mut slope = dot(&grad, &dir);
            if !(slope < 0.0) {
                dir = grad.iter().map(|g| -g).collect();
                slope = dot(&grad, &dir);
                memory.pairs.clear();
            }
            let mut alpha = if memory.pairs.is_empty() {
                0.1 * h / max_abs(&dir)
            } else {
                1.0
            };
            alpha = alpha.min(max_step / max_abs(&dir));
            let mut found = None;
            for _ in 0..config.max_backtracks {
                let cand: Vec<f64> = phi
                    .displacement()
                    .iter()
                    .zip(&dir)
                    .map(|(u, d)| u + alpha * d)
                    .collect();
                if let Ok(next) = Deformation::new(grid.clone(), cand, eps) {
                    if let Ok(e) = pair_energy(reference, moving, &next, params) {
                        if e.total <= energy.total + config.armijo * alpha * slope {
                            found = Some((next, e));
                            break;
                        }
                    }
                }
                alpha *= config.backtrack;
            }
            match found {
                Some(f) => break Some(f),
                None if !restarted && !memory.pairs.is_empty() => {
                    memory.pairs.clear();
                    restarted = true;
                }
                None => break None,
            }
        };
        let Some((next, e)) = accepted else {
            stalled = true;
            break;
        };
        let (_, next_grad) = pair_energy_gradient(reference, moving, &next, params)?;
        let s: Vec<f64> = next
            .displacement()
            .iter()
            .zip(phi.displacement())
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        let decrease = energy.total - e.total;
        phi = next;
        energy = e;
        grad = next_grad;
        if decrease <= 1e-14 * energy.total.abs() {
            break;
        }
    }
    Ok(Registration {
        phi,
        energy,
        iterations,
        gradient_norm: max_abs(&grad),
        stalled,
    })
}

/// Coarse-to-fine registration with `config.levels` levels.
pub fn register(
    reference: &ManifoldImage,
    moving: &ManifoldImage,
    params: &EnergyParams,
    config: &SolverConfig,
) -> Result<Registration> {
    config.validate()?;
    params.validate(reference.grid().dim())?;
    reference.ensure_compatible(moving)?;
    let grids = pyramid::grids(reference.grid(), config.levels);
    let mut current: Option<Deformation> = None;
    let mut last = None;
    for g in grids {
        let (r, m) = if &g == reference.grid() {
            (reference.clone(), moving.clone())
        } else {
            (pyramid::restrict(reference, &g)?, pyramid::restrict(moving, &g)?)
        };
        let init = match &current {
            Some(c) => pyramid::prolong(c, &g),
            None => None,
        };
        let result = register_from(&r, &m, init.as_ref(), params, config)?;
        current = Some(result.phi.clone());
        last = Some(result);
    }
    Ok(last.expect("at least one level"))
}
