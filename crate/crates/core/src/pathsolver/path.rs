use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SolverConfig;
use super::pyramid;
use super::register::{register_from, RegistrationSummary};
use crate::energy::{data_misfit, pair_energy, EnergyParams, PairEnergy};
use crate::error::{Error, Result};
use crate::field::{pointwise_geodesic, warp, Deformation, ManifoldImage};
use crate::sum::pairwise_sum;

/// `K+1` images, `K` deformations and the step energies `R_k`.
#[derive(Clone, Debug)]
pub struct DiscretePath {
    images: Vec<ManifoldImage>,
    deformations: Vec<Deformation>,
    energies: Vec<PairEnergy>,
    j: f64,
}

impl DiscretePath {
    /// Assembles a path and evaluates its energy.
    pub fn new(
        images: Vec<ManifoldImage>,
        deformations: Vec<Deformation>,
        params: &EnergyParams,
    ) -> Result<Self> {
        let k = deformations.len();
        if k < 2 {
            return Err(Error::Contract(format!("K = {k} must be at least 2")));
        }
        if images.len() != k + 1 {
            return Err(Error::Contract(format!(
                "{} images for {k} deformations",
                images.len()
            )));
        }
        for img in &images[1..] {
            images[0].ensure_compatible(img)?;
        }
        let energies = step_energies(&images, &deformations, params)?;
        let j = total(&energies, k);
        Ok(Self {
            images,
            deformations,
            energies,
            j,
        })
    }

    /// Pointwise geodesic images `γ_{I_A,I_B}(k/K)` with identity deformations.
    pub fn initial(
        start: &ManifoldImage,
        end: &ManifoldImage,
        k: usize,
        params: &EnergyParams,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::Contract(format!("K = {k} must be at least 2")));
        }
        start.ensure_compatible(end)?;
        let mut images = vec![start.clone()];
        for i in 1..k {
            images.push(pointwise_geodesic(start, end, i as f64 / k as f64)?);
        }
        images.push(end.clone());
        let id = Deformation::identity(start.grid().clone(), params.coupling.epsilon)?;
        Self::new(images, vec![id; k], params)
    }

    pub fn k(&self) -> usize {
        self.deformations.len()
    }

    pub fn images(&self) -> &[ManifoldImage] {
        &self.images
    }

    pub fn deformations(&self) -> &[Deformation] {
        &self.deformations
    }

    pub fn energies(&self) -> &[PairEnergy] {
        &self.energies
    }

    /// `J_K = K·Σ R_k`, as stored.
    pub fn energy(&self) -> f64 {
        self.j
    }

    pub fn min_jacobian_det(&self) -> f64 {
        self.deformations
            .iter()
            .map(|d| d.min_jacobian_det())
            .fold(f64::INFINITY, f64::min)
    }
}

fn step_energies(
    images: &[ManifoldImage],
    deformations: &[Deformation],
    params: &EnergyParams,
) -> Result<Vec<PairEnergy>> {
    (0..deformations.len())
        .into_par_iter()
        .map(|i| pair_energy(&images[i], &images[i + 1], &deformations[i], params))
        .collect()
}

fn total(energies: &[PairEnergy], k: usize) -> f64 {
    let r: Vec<f64> = energies.iter().map(|e| e.total).collect();
    k as f64 * pairwise_sum(&r)
}

/// Recomputes `J_K = K·Σ_k R(I_{k−1}, I_k, φ_k)` from the stored path.
pub fn path_energy(path: &DiscretePath, params: &EnergyParams) -> Result<f64> {
    let e = step_energies(&path.images, &path.deformations, params)?;
    Ok(total(&e, path.k()))
}

/// Closed-form minimizer of the decoupled pointwise objective for image `k`:
/// `γ_{a,b}(1/(1+w₁))` with `a = I_{k−1}∘φ_k⁻¹`, `w₁ = det Dφ_k⁻¹` and
/// `b = I_{k+1}∘φ_{k+1}`. Returns `(a, w₁, b, minimizer)`.
pub fn image_update_candidate(
    path: &DiscretePath,
    k: usize,
) -> Result<(ManifoldImage, Vec<f64>, ManifoldImage, ManifoldImage)> {
    if k == 0 || k >= path.k() {
        return Err(Error::Contract(format!("image {k} is not interior")));
    }
    let prev = &path.images[k - 1];
    let grid = prev.grid();
    let n = grid.dim();
    let kind = prev.kind();
    let d = kind.payload_dim();
    let inv = path.deformations[k - 1].invert()?;
    let a = warp(prev, &inv)?;
    let w1: Result<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| Ok(inv.jacobian_at3(&grid.position(i)[..n])?.determinant()))
        .collect();
    let w1 = w1?;
    let b = warp(&path.images[k + 1], &path.deformations[k])?;
    let mut values = vec![0.0; grid.len() * d];
    values
        .par_chunks_exact_mut(d)
        .enumerate()
        .for_each(|(i, out)| kind.pair_mean_into(a.value(i), b.value(i), w1[i], 1.0, out));
    let cand = ManifoldImage::from_trusted(grid.clone(), kind, values);
    Ok((a, w1, b, cand))
}

/// Data energy of the two steps adjacent to image `k` for a trial image.
fn local_energy(path: &DiscretePath, k: usize, img: &ManifoldImage) -> Result<f64> {
    let (left, _) = data_misfit(
        &path.images[k - 1],
        img,
        &path.deformations[k - 1].positions(),
        false,
    )?;
    let (right, _) = data_misfit(
        img,
        &path.images[k + 1],
        &path.deformations[k].positions(),
        false,
    )?;
    Ok(left + right)
}

/// Safeguarded update of one interior image: the closed-form candidate, or
/// the first geodesic step towards it that does not increase the adjacent
/// data energy, or the old image.
fn update_one(path: &DiscretePath, k: usize) -> Result<ManifoldImage> {
    let (_, _, _, cand) = image_update_candidate(path, k)?;
    let old = &path.images[k];
    let base = local_energy(path, k, old)?;
    if local_energy(path, k, &cand)? <= base {
        return Ok(cand);
    }
    let mut theta = 0.5;
    for _ in 0..12 {
        let trial = pointwise_geodesic(old, &cand, theta)?;
        if local_energy(path, k, &trial)? <= base {
            return Ok(trial);
        }
        theta *= 0.5;
    }
    Ok(old.clone())
}

/// Image half-step for fixed deformations: odd-indexed images first, then
/// even-indexed ones, each group updated concurrently from frozen neighbors.
pub fn update_images(path: &DiscretePath, params: &EnergyParams) -> Result<DiscretePath> {
    let mut current = path.clone();
    for parity in [1, 0] {
        let ks: Vec<usize> = (1..current.k()).filter(|k| k % 2 == parity).collect();
        let updated: Result<Vec<(usize, ManifoldImage)>> = ks
            .par_iter()
            .map(|&k| Ok((k, update_one(&current, k)?)))
            .collect();
        for (k, img) in updated? {
            current.images[k] = img;
        }
    }
    DiscretePath::new(current.images, current.deformations, params)
}

/// Which half-step produced a trace entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Register,
    Images,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub level: usize,
    pub outer: usize,
    pub phase: Phase,
    pub energy: f64,
}

/// Result of [`discrete_geodesic`].
#[derive(Clone, Debug)]
pub struct GeodesicRun {
    pub path: DiscretePath,
    pub trace: Vec<TraceEntry>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Per-step registration summaries of the last outer iteration.
    pub registrations: Vec<RegistrationSummary>,
}

impl GeodesicRun {
    /// Whether `J_K` never increased within any pyramid level.
    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| {
            w[0].level != w[1].level || w[1].energy <= w[0].energy
        })
    }
}

fn solve_level(
    mut path: DiscretePath,
    params: &EnergyParams,
    config: &SolverConfig,
    level: usize,
    trace: &mut Vec<TraceEntry>,
) -> Result<(DiscretePath, usize, bool, Vec<RegistrationSummary>)> {
    trace.push(TraceEntry {
        level,
        outer: 0,
        phase: Phase::Init,
        energy: path.j,
    });
    let mut summaries = Vec::new();
    for outer in 1..=config.max_outer {
        let before = path.j;
        if !config.freeze_deformations {
            let regs: Result<Vec<_>> = (0..path.k())
                .into_par_iter()
                .map(|i| {
                    register_from(
                        &path.images[i],
                        &path.images[i + 1],
                        Some(&path.deformations[i]),
                        params,
                        config,
                    )
                })
                .collect();
            let regs = regs?;
            summaries = regs.iter().map(|r| r.summary()).collect();
            let defs = regs.into_iter().map(|r| r.phi).collect();
            let next = DiscretePath::new(path.images.clone(), defs, params)?;
            // registration starts from the current φ, so this cannot increase
            if next.j <= path.j {
                path = next;
            }
            trace.push(TraceEntry {
                level,
                outer,
                phase: Phase::Register,
                energy: path.j,
            });
        }
        let next = update_images(&path, params)?;
        if next.j <= path.j {
            path = next;
        }
        trace.push(TraceEntry {
            level,
            outer,
            phase: Phase::Images,
            energy: path.j,
        });
        let decrease = before - path.j;
        if decrease <= config.tol * before.abs() || path.j == 0.0 {
            return Ok((path, outer, true, summaries));
        }
    }
    Ok((path, config.max_outer, false, summaries))
}

/// Alternating minimization of `J_K` with fixed endpoints, coarse to fine.
pub fn discrete_geodesic(
    start: &ManifoldImage,
    end: &ManifoldImage,
    k: usize,
    params: &EnergyParams,
    config: &SolverConfig,
) -> Result<GeodesicRun> {
    config.validate()?;
    params.validate(start.grid().dim())?;
    start.ensure_compatible(end)?;
    let levels = if config.freeze_deformations {
        vec![start.grid().clone()]
    } else {
        pyramid::grids(start.grid(), config.levels)
    };
    let mut trace = Vec::new();
    let mut previous: Option<DiscretePath> = None;
    let mut outcome = None;
    let last = levels.len() - 1;
    for (level, g) in levels.iter().enumerate() {
        let (a, b) = if level == last {
            (start.clone(), end.clone())
        } else {
            (pyramid::restrict(start, g)?, pyramid::restrict(end, g)?)
        };
        let mut path = DiscretePath::initial(&a, &b, k, params)?;
        if let Some(coarse) = &previous {
            let mut images = vec![a.clone()];
            for img in &coarse.images[1..k] {
                images.push(pyramid::restrict(img, g)?);
            }
            images.push(b.clone());
            let id = Deformation::identity(g.clone(), params.coupling.epsilon)?;
            let defs: Vec<Deformation> = coarse
                .deformations
                .iter()
                .map(|d| pyramid::prolong(d, g).unwrap_or_else(|| id.clone()))
                .collect();
            if let Ok(p) = DiscretePath::new(images, defs, params) {
                if p.j < path.j {
                    path = p;
                }
            }
        }
        let (p, outer, converged, regs) = solve_level(path, params, config, level, &mut trace)?;
        previous = Some(p.clone());
        outcome = Some((p, outer, converged, regs));
    }
    let (path, outer_iterations, converged, registrations) = outcome.expect("one level");
    Ok(GeodesicRun {
        path,
        trace,
        outer_iterations,
        converged,
        registrations,
    })
}

/// Alternating minimization at the finest level, starting from `initial`.
pub fn refine_geodesic(
    initial: DiscretePath,
    params: &EnergyParams,
    config: &SolverConfig,
) -> Result<GeodesicRun> {
    config.validate()?;
    params.validate(initial.images[0].grid().dim())?;
    let mut trace = Vec::new();
    let (path, outer_iterations, converged, registrations) =
        solve_level(initial, params, config, 0, &mut trace)?;
    Ok(GeodesicRun {
        path,
        trace,
        outer_iterations,
        converged,
        registrations,
    })
}
