use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::field::{Deformation, ManifoldImage};
use crate::pathsolver::DiscretePath;

/// Uniform partition `t_k = k/K` of `[0,1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub k: usize,
}

impl TimeGrid {
    pub fn new(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::Contract("K must be positive".into()));
        }
        Ok(Self { k })
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 / self.k as f64
    }

    /// Step index `k ∈ 1..=K` with `t ∈ [t_{k−1}, t_k)` (the last step is
    /// closed) and the local parameter `K(t − t_{k−1}) ∈ [0,1]`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Contract(format!("time {t} outside [0,1]")));
        }
        let kt = t * self.k as f64;
        let mut j = kt.floor();
        if (kt - kt.round()).abs() < 1e-12 {
            j = kt.round();
        }
        let step = (j as usize + 1).min(self.k);
        let s = (kt - (step - 1) as f64).clamp(0.0, 1.0);
        let s = if s < 1e-12 { 0.0 } else if s > 1.0 - 1e-12 { 1.0 } else { s };
        Ok((step, s))
    }
}

/// `y_{K,k}(t,x) = x + (t − t_{k−1})·K·(φ_k(x) − x)` at the grid nodes.
pub fn transport_map(phi: &Deformation, k_total: usize, k: usize, t: f64) -> Result<Vec<f64>> {
    let tg = TimeGrid::new(k_total)?;
    if k == 0 || k > k_total {
        return Err(Error::Contract(format!("step {k} outside 1..={k_total}")));
    }
    let (lo, hi) = (tg.node(k - 1), tg.node(k));
    if t < lo - 1e-12 || t > hi + 1e-12 {
        return Err(Error::Contract(format!("time {t} outside step [{lo}, {hi}]")));
    }
    let s = ((t - lo) * k_total as f64).clamp(0.0, 1.0);
    let n = phi.grid().dim();
    let mut out = phi.positions();
    for i in 0..phi.grid().len() {
        let x = phi.grid().position(i);
        for a in 0..n {
            out[i * n + a] = x[a] + s * (out[i * n + a] - x[a]);
        }
    }
    Ok(out)
}

/// Temporal extension of a discrete path: flows, velocities, material
/// derivative and blended images at any `t ∈ [0,1]`.
///
/// Flows are stored at the step boundaries and evaluated affinely inside a
/// step.
#[derive(Clone, Debug)]
pub struct ExtensionBundle {
    path: DiscretePath,
    time: TimeGrid,
    samples_per_step: usize,
    /// `Y_K(t_k, x)` at the nodes, `k = 0..=K`.
    boundary_flow: Vec<Vec<f64>>,
    /// `w_{K,k} = K(φ_k − Id)` at the nodes.
    step_velocity: Vec<Vec<f64>>,
    /// `z_K(t, Y_K(t,x))` on step `k`, constant in `t`, at the nodes.
    step_rate: Vec<Vec<f64>>,
}

fn to_point(p: &[f64], n: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..n].copy_from_slice(&p[..n]);
    out
}

impl ExtensionBundle {
    pub fn new(path: &DiscretePath, samples_per_step: usize) -> Result<Self> {
        if samples_per_step < 1 {
            return Err(Error::Contract("need at least one sample per step".into()));
        }
        let k = path.k();
        let time = TimeGrid::new(k)?;
        let grid = path.images()[0].grid().clone();
        let n = grid.dim();
        let kind = path.images()[0].kind();
        let mut boundary_flow = vec![(0..grid.len())
            .flat_map(|i| grid.position(i)[..n].to_vec())
            .collect::<Vec<f64>>()];
        let mut step_rate = Vec::with_capacity(k);
        for step in 1..=k {
            let phi = &path.deformations()[step - 1];
            let prev = boundary_flow.last().expect("nonempty");
            let next: Result<Vec<[f64; 3]>> = prev
                .par_chunks_exact(n)
                .map(|p| phi.eval(p))
                .collect();
            let next: Vec<f64> = next?.iter().flat_map(|p| p[..n].to_vec()).collect();
            let a = &path.images()[step - 1];
            let b = &path.images()[step];
            let rate: Result<Vec<f64>> = prev
                .par_chunks_exact(n)
                .zip(next.par_chunks_exact(n))
                .map(|(p, q)| Ok(k as f64 * kind.dist(&a.sample(p)?, &b.sample(q)?)))
                .collect();
            step_rate.push(rate?);
            boundary_flow.push(next);
        }
        let step_velocity = path
            .deformations()
            .iter()
            .map(|d| d.displacement().iter().map(|u| k as f64 * u).collect())
            .collect();
        Ok(Self {
            path: path.clone(),
            time,
            samples_per_step,
            boundary_flow,
            step_velocity,
            step_rate,
        })
    }

    pub fn path(&self) -> &DiscretePath {
        &self.path
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.time
    }

    pub fn samples_per_step(&self) -> usize {
        self.samples_per_step
    }

    /// Piecewise constant velocities `w_{K,k}` at the nodes.
    pub fn step_velocities(&self) -> &[Vec<f64>] {
        &self.step_velocity
    }

    /// Sample times `j/(K·S)`, `j = 0..=K·S`.
    pub fn sample_times(&self) -> Vec<f64> {
        let total = self.time.k * self.samples_per_step;
        (0..=total).map(|j| j as f64 / total as f64).collect()
    }

    fn dim(&self) -> usize {
        self.path.images()[0].grid().dim()
    }

    fn phi(&self, step: usize) -> &Deformation {
        &self.path.deformations()[step - 1]
    }

    /// `Y_K(t,·)` at the nodes.
    pub fn flow_nodes(&self, t: f64) -> Result<Vec<f64>> {
        let (step, s) = self.time.locate(t)?;
        let a = &self.boundary_flow[step - 1];
        let b = &self.boundary_flow[step];
        Ok(a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect())
    }

    /// `Y_K(t,x)` for any `x ∈ Ω`.
    pub fn flow(&self, t: f64, x: &[f64]) -> Result<[f64; 3]> {
        let n = self.dim();
        let (step, s) = self.time.locate(t)?;
        let mut p = to_point(x, n);
        for j in 1..step {
            p = self.phi(j).eval(&p[..n])?;
        }
        let q = self.phi(step).eval(&p[..n])?;
        for a in 0..n {
            p[a] += s * (q[a] - p[a]);
        }
        Ok(p)
    }

    /// `x_{K,k}(t,y)`: the preimage under the current transport map, with
    /// its step and local parameter.
    fn step_preimage(&self, t: f64, y: &[f64]) -> Result<(usize, f64, [f64; 3])> {
        let n = self.dim();
        let (step, s) = self.time.locate(t)?;
        if s == 0.0 {
            return Ok((step, s, to_point(y, n)));
        }
        let p = self.phi(step).scaled(s)?.inverse_point(y)?;
        Ok((step, s, p))
    }

    /// `X_K(t,y)`, the inverse flow.
    pub fn inverse_flow(&self, t: f64, y: &[f64]) -> Result<[f64; 3]> {
        let n = self.dim();
        let (step, _, mut p) = self.step_preimage(t, y)?;
        for j in (1..step).rev() {
            p = self.phi(j).inverse_point(&p[..n])?;
        }
        Ok(p)
    }

    /// `v_K(t,y) = w_{K,k}(x_{K,k}(t,y))`.
    pub fn velocity(&self, t: f64, y: &[f64]) -> Result<[f64; 3]> {
        let n = self.dim();
        let (step, _, p) = self.step_preimage(t, y)?;
        let q = self.phi(step).eval(&p[..n])?;
        let mut v = [0.0; 3];
        for a in 0..n {
            v[a] = self.time.k as f64 * (q[a] - p[a]);
        }
        Ok(v)
    }

    /// `z_K(t,y) = K·d(I_{k−1}(p), I_k(φ_k(p)))`, `p = x_{K,k}(t,y)`.
    pub fn material_derivative(&self, t: f64, y: &[f64]) -> Result<f64> {
        let n = self.dim();
        let (step, _, p) = self.step_preimage(t, y)?;
        let q = self.phi(step).eval(&p[..n])?;
        let kind = self.path.images()[0].kind();
        let a = self.path.images()[step - 1].sample(&p[..n])?;
        let b = self.path.images()[step].sample(&q[..n])?;
        Ok(self.time.k as f64 * kind.dist(&a, &b))
    }

    /// `I^int_K(t,y) = γ_{I_{k−1}(p), I_k(φ_k(p))}(K(t − t_{k−1}))`.
    pub fn image_value(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let (step, s, p) = self.step_preimage(t, y)?;
        let a = self.path.images()[step - 1].sample(&p[..n])?;
        if s == 0.0 {
            return Ok(a);
        }
        let q = self.phi(step).eval(&p[..n])?;
        let b = self.path.images()[step].sample(&q[..n])?;
        let kind = self.path.images()[0].kind();
        Ok(kind.geodesic(&a, &b, s))
    }

    /// A `k`-step path through `I^int_K(j/k,·)` with identity deformations.
pub fn resample_path(path: &DiscretePath, k: usize, params: &EnergyParams) -> Result<DiscretePath> {
    let bundle = ExtensionBundle::new(path, 1)?;
    let first = &path.images()[0];
    let mut images = vec![first.clone()];
    for j in 1..k {
        images.push(bundle.image(j as f64 / k as f64)?);
    }
    images.push(path.images()[path.k()].clone());
    let id = Deformation::identity(first.grid().clone(), params.coupling.epsilon)?;
    DiscretePath::new(images, vec![id; k], params)
}

/// `I^int_K(t,·)` at the grid nodes.
    pub fn image(&self, t: f64) -> Result<ManifoldImage> {
        let first = &self.path.images()[0];
        let grid = first.grid().clone();
        let n = grid.dim();
        let values: Result<Vec<Vec<f64>>> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.image_value(t, &grid.position(i)[..n]))
            .collect();
        ManifoldImage::new(grid, first.kind(), values?.concat())
    }

    /// `z_K` at the nodes for every sample time in `[0,1)`.
    pub fn material_derivative_samples(&self) -> Result<Vec<Vec<f64>>> {
        let grid = self.path.images()[0].grid();
        let n = grid.dim();
        let times = self.sample_times();
        times[..times.len() - 1]
            .par_iter()
            .map(|&t| {
                (0..grid.len())
                    .map(|i| self.material_derivative(t, &grid.position(i)[..n]))
                    .collect()
            })
            .collect()
    }

    /// Lagrangian rate `z_K(t, Y_K(t,x))` on step `k` at the nodes.
    pub fn step_rates(&self) -> &[Vec<f64>] {
        &self.step_rate
    }

    /// `∫_t^s z_K(r, Y_K(r,x)) dr` by midpoint quadrature on the sample grid;
    /// the integrand is evaluated in Eulerian form at `Y_K(r,x)`.
    pub fn rate_integral(&self, t: f64, s: f64, x: &[f64]) -> Result<f64> {
        let total = self.time.k * self.samples_per_step;
        let dt = 1.0 / total as f64;
        let first = ((t / dt).floor() as usize).min(total - 1);
        let mut acc = 0.0;
        let mut j = first;
        while j < total {
            let lo = (j as f64 * dt).max(t);
            let hi = ((j + 1) as f64 * dt).min(s);
            if hi <= lo {
                if j as f64 * dt >= s {
                    break;
                }
                j += 1;
                continue;
            }
            let mid = 0.5 * (lo + hi);
            let y = self.flow(mid, x)?;
            acc += (hi - lo) * self.material_derivative(mid, &y[..self.dim()])?;
            j += 1;
        }
        Ok(acc)
    }

    /// Time-integrated max-norm residual of `dY_K/dt = v_K(t, Y_K)` with
    /// central differences at the interior sample times.
    pub fn ode_residual(&self) -> Result<f64> {
        let times = self.sample_times();
        let total = times.len() - 1;
        let dt = 1.0 / total as f64;
        let n = self.dim();
        let per_time: Result<Vec<f64>> = (1..total)
            .into_par_iter()
            .map(|j| {
                let prev = self.flow_nodes(times[j - 1])?;
                let next = self.flow_nodes(times[j + 1])?;
                let cur = self.flow_nodes(times[j])?;
                let mut worst = 0.0f64;
                for (i, y) in cur.chunks_exact(n).enumerate() {
                    let v = self.velocity(times[j], y)?;
                    for a in 0..n {
                        let fd = (next[i * n + a] - prev[i * n + a]) / (2.0 * dt);
                        worst = worst.max((fd - v[a]).abs());
                    }
                }
                Ok(worst * dt)
            })
            .collect();
        Ok(per_time?.iter().sum())
    }
}

/// `w_{K,k} = K(φ_k − Id)` at the nodes and `v_K(t,·)` at the nodes for
/// each requested time.
pub fn velocities(path: &DiscretePath, times: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let bundle = ExtensionBundle::new(path, 1)?;
    let grid = path.images()[0].grid();
    let n = grid.dim();
    let v: Result<Vec<Vec<f64>>> = times
        .iter()
        .map(|&t| {
            let mut out = Vec::with_capacity(grid.len() * n);
            for i in 0..grid.len() {
                out.extend_from_slice(&bundle.velocity(t, &grid.position(i)[..n])?[..n]);
            }
            Ok(out)
        })
        .collect();
    Ok((bundle.step_velocity.clone(), v?))
}

/// A `k`-step path through `I^int_K(j/k,·)` with identity deformations.
pub fn resample_path(path: &DiscretePath, k: usize, params: &EnergyParams) -> Result<DiscretePath> {
    let bundle = ExtensionBundle::new(path, 1)?;
    let first = &path.images()[0];
    let mut images = vec![first.clone()];
    for j in 1..k {
        images.push(bundle.image(j as f64 / k as f64)?);
    }
    images.push(path.images()[path.k()].clone());
    let id = Deformation::identity(first.grid().clone(), params.coupling.epsilon)?;
    DiscretePath::new(images, vec![id; k], params)
}

/// `I^int_K(t,·)` at the grid nodes.
pub fn image_extension(path: &DiscretePath, t: f64) -> Result<ManifoldImage> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("time {t} outside [0,1]")));
    }
    ExtensionBundle::new(path, 1)?.image(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub samples: usize,
    /// Largest `d(I(t,Y(t,x)), I(s,Y(s,x))) − ∫_t^s z_K(r,Y(r,x)) dr`.
    pub max_violation: f64,
    /// Largest `|lhs − rhs|` over pairs inside one step.
    pub within_step_deviation: f64,
    pub ode_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Samples `m` arbitrary and `m` within-step triples `(t, s, x)` and checks
/// the transport inequality of the extended path.
pub fn verify_admissibility(
    bundle: &ExtensionBundle,
    m: usize,
    seed: u64,
    tolerance: f64,
) -> Result<AdmissibilityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bundle.dim();
    let k = bundle.time.k;
    let mut triples = Vec::with_capacity(2 * m);
    for i in 0..2 * m {
        let mut x = [0.0; 3];
        for v in x.iter_mut().take(n) {
            *v = rng.random_range(0.0..1.0);
        }
        let (t, s) = if i < m {
            let a: f64 = rng.random_range(0.0..1.0);
            let b: f64 = rng.random_range(0.0..1.0);
            (a.min(b), a.max(b))
        } else {
            let step = rng.random_range(0..k) as f64;
            let a: f64 = rng.random_range(0.0..1.0);
            let b: f64 = rng.random_range(0.0..1.0);
            ((step + a.min(b)) / k as f64, (step + a.max(b)) / k as f64)
        };
        triples.push((t, s, x, i >= m));
    }
    let kind = bundle.path.images()[0].kind();
    let results: Result<Vec<(f64, bool)>> = triples
        .par_iter()
        .map(|(t, s, x, within)| {
            let yt = bundle.flow(*t, &x[..n])?;
            let ys = bundle.flow(*s, &x[..n])?;
            let lhs = kind.dist(
                &bundle.image_value(*t, &yt[..n])?,
                &bundle.image_value(*s, &ys[..n])?,
            );
            let rhs = bundle.rate_integral(*t, *s, &x[..n])?;
            Ok((lhs - rhs, *within))
        })
        .collect();
    let results = results?;
    let max_violation = results.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let within_step_deviation = results
        .iter()
        .filter(|r| r.1)
        .map(|r| r.0.abs())
        .fold(0.0, f64::max);
    let ode_residual = bundle.ode_residual()?;
    Ok(AdmissibilityReport {
        samples: results.len(),
        max_violation,
        within_step_deviation,
        ode_residual,
        tolerance,
        pass: max_violation <= tolerance,
    })
}
