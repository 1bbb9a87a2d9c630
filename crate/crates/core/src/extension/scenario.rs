use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::TimeGrid;
use super::expr::Expr;
use crate::energy::{dissipation, EnergyParams};
use crate::error::{Error, Result};
use crate::field::{Deformation, GridSpec, ManifoldImage};
use crate::manifold::ManifoldKind;
use crate::pathsolver::DiscretePath;
use crate::sum::pairwise_sum;

/// Time-dependent velocity field on `Ω`.
pub trait VelocityField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64]) -> [f64; 3];
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ZeroVelocity(pub usize);

impl VelocityField for ZeroVelocity {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, _t: f64, _x: &[f64]) -> [f64; 3] {
        [0.0; 3]
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// One expression per component.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExprVelocity {
    pub components: Vec<Expr>,
}

impl ExprVelocity {
    pub fn new(components: Vec<Expr>) -> Result<Self> {
        if !(2..=3).contains(&components.len()) {
            return Err(Error::Contract(format!(
                "velocity needs 2 or 3 components, got {}",
                components.len()
            )));
        }
        Ok(Self { components })
    }

    pub fn parse(src: &[&str]) -> Result<Self> {
        Self::new(src.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?)
    }
}

impl VelocityField for ExprVelocity {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, t: f64, x: &[f64]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (slot, e) in v.iter_mut().zip(&self.components) {
            *slot = e.eval(t, x);
        }
        v
    }
}

/// Classical RK4 for `dY/dt = v(t,Y)` from `t0` to `t1` in `steps` steps.
pub fn flow_point(v: &dyn VelocityField, x: &[f64], t0: f64, t1: f64, steps: usize) -> [f64; 3] {
    let n = v.dim();
    let mut y = [0.0; 3];
    y[..n].copy_from_slice(&x[..n]);
    if v.is_zero() || steps == 0 {
        return y;
    }
    let h = (t1 - t0) / steps as f64;
    let shift = |y: &[f64; 3], k: &[f64; 3], s: f64| {
        let mut out = *y;
        for a in 0..n {
            out[a] += s * k[a];
        }
        out
    };
    for j in 0..steps {
        let t = t0 + j as f64 * h;
        let k1 = v.eval(t, &y[..n]);
        let k2 = v.eval(t + 0.5 * h, &shift(&y, &k1, 0.5 * h)[..n]);
        let k3 = v.eval(t + 0.5 * h, &shift(&y, &k2, 0.5 * h)[..n]);
        let k4 = v.eval(t + h, &shift(&y, &k3, h)[..n]);
        for a in 0..n {
            y[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
    }
    y
}

/// `Y(j/S, x)` at every node, `j = 0..=S`, by RK4 with `S` steps.
pub fn integrate_flow(v: &dyn VelocityField, grid: &GridSpec, steps: usize) -> Vec<Vec<f64>> {
    let n = grid.dim();
    let h = 1.0 / steps.max(1) as f64;
    let per_node: Vec<Vec<[f64; 3]>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut y = grid.position(i);
            let mut out = vec![y];
            for j in 0..steps {
                y = flow_point(v, &y[..n], j as f64 * h, (j + 1) as f64 * h, 1);
                out.push(y);
            }
            out
        })
        .collect();
    (0..=steps)
        .map(|j| per_node.iter().flat_map(|p| p[j][..n].to_vec()).collect())
        .collect()
}

/// Manifold-valued image defined at every point of `Ω`.
pub trait ImageField: Send + Sync {
    fn kind(&self) -> ManifoldKind;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn sample_grid(&self, grid: &GridSpec) -> Result<ManifoldImage> {
        let n = grid.dim();
        let values: Result<Vec<Vec<f64>>> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.eval(&grid.position(i)[..n]))
            .collect();
        ManifoldImage::new(grid.clone(), self.kind(), values?.concat())
    }
}

/// `exp_o(V(x))` at the base point `o` of the manifold, with the tangent
/// coordinates `V` given by expressions: the vector itself (Euclidean), the
/// packed symmetric log-matrix (SPD), or the spatial part (hyperboloid).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExprImage {
    pub kind: ManifoldKind,
    pub tangent: Vec<Expr>,
}

impl ExprImage {
    pub fn new(kind: ManifoldKind, tangent: Vec<Expr>) -> Result<Self> {
        kind.check()?;
        let want = match kind {
            ManifoldKind::Hyperboloid(n) => n,
            _ => kind.payload_dim(),
        };
        if tangent.len() != want {
            return Err(Error::Contract(format!(
                "{kind} image needs {want} expressions, got {}",
                tangent.len()
            )));
        }
        Ok(Self { kind, tangent })
    }

    pub fn parse(kind: ManifoldKind, src: &[&str]) -> Result<Self> {
        Self::new(kind, src.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?)
    }
}

impl ImageField for ExprImage {
    fn kind(&self) -> ManifoldKind {
        self.kind
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v: Vec<f64> = self.tangent.iter().map(|e| e.eval(0.0, x)).collect();
        if let ManifoldKind::Hyperboloid(_) = self.kind {
            v.insert(0, 0.0);
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Expression(format!("non-finite image value at {x:?}")));
        }
        let base = self.kind.base_point();
        let mut out = vec![0.0; base.len()];
        self.kind.exp_into(&base, &v, &mut out);
        Ok(out)
    }
}

/// Multilinear interpolation of a sampled image.
#[derive(Clone, Debug)]
pub struct GridImage(pub ManifoldImage);

impl ImageField for GridImage {
    fn kind(&self) -> ManifoldKind {
        self.0.kind()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.sample(x)
    }
}

/// `base ∘ Y(1,·)⁻¹`, with the inverse flow integrated backwards by RK4.
#[derive(Clone)]
pub struct TransportedImage {
    pub base: Arc<dyn ImageField>,
    pub velocity: Arc<dyn VelocityField>,
    pub steps: usize,
}

impl ImageField for TransportedImage {
    fn kind(&self) -> ManifoldKind {
        self.base.kind()
    }

    fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.velocity.dim();
        let x = flow_point(self.velocity.as_ref(), y, 1.0, 0.0, self.steps);
        self.base.eval(&clamp_to_domain(x, n)?[..n])
    }
}

fn clamp_to_domain(mut p: [f64; 3], n: usize) -> Result<[f64; 3]> {
    for a in 0..n {
        if p[a] < -1e-9 || p[a] > 1.0 + 1e-9 {
            return Err(Error::OutOfDomain {
                position: p[..n].to_vec(),
                overshoot: (-p[a]).max(p[a] - 1.0),
            });
        }
        p[a] = p[a].clamp(0.0, 1.0);
    }
    Ok(p)
}

/// Scalar material derivative of the scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", content = "expr", rename_all = "snake_case")]
pub enum RateSource {
    Zero,
    /// `z(t,y)` in Eulerian coordinates.
    Expr(Expr),
    /// `z(t, Y(t,x)) = d(I_A(x), I_B(Y(1,x)))`, constant along trajectories.
    EndpointDistance,
}

/// Flow, rate and endpoint images of a continuous metamorphosis path.
#[derive(Clone)]
pub struct AnalyticScenario {
    pub grid: GridSpec,
    pub velocity: Arc<dyn VelocityField>,
    pub rate: RateSource,
    pub start: Arc<dyn ImageField>,
    pub end: Arc<dyn ImageField>,
    /// RK4 steps for the exact flow and time intervals for the continuous energy.
    pub flow_steps: usize,
    /// Sub-samples per time step for the rate integrals.
    pub samples_per_step: usize,
    /// Slack allowed in `d(I_A(x), I_B(Y(1,x))) ≤ ∫₀¹ z(s,Y(s,x)) ds`.
    pub compatibility_tol: f64,
}

/// Counts of the three cases in the blending parameter, over grid nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub zero: usize,
    pub guarded: usize,
    pub regular: usize,
}

/// Constructed recovery path with its energy.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub path: DiscretePath,
    pub j_k: f64,
    pub beta_k: f64,
    /// `max_k ‖φ_k − Id‖_{C¹}` at the nodes.
    pub c1_norm: f64,
    pub branches: BranchCounts,
}

fn simpson(values: &[f64], h: f64) -> f64 {
    let m = values.len() - 1;
    debug_assert!(m % 2 == 0);
    let mut acc = values[0] + values[m];
    for (j, v) in values.iter().enumerate().take(m).skip(1) {
        acc += if j % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

struct Trajectory {
    /// `∫₀^{t_k} z(s, Y_K(s,x)) ds`, `k = 0..=K`.
    cumulative: Vec<f64>,
}

impl AnalyticScenario {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn kind(&self) -> ManifoldKind {
        self.start.kind()
    }

    pub fn check(&self) -> Result<()> {
        if self.start.kind() != self.end.kind() {
            return Err(Error::KindMismatch {
                left: self.start.kind(),
                right: self.end.kind(),
            });
        }
        if self.velocity.dim() != self.dim() {
            return Err(Error::Contract("velocity dimension differs from grid".into()));
        }
        if self.flow_steps < 2 || self.flow_steps % 2 != 0 {
            return Err(Error::Contract("flow_steps must be even and positive".into()));
        }
        if self.samples_per_step < 2 || self.samples_per_step % 2 != 0 {
            return Err(Error::Contract("samples_per_step must be even and positive".into()));
        }
        let n = self.dim();
        for i in 0..self.grid.len() {
            if !self.grid.is_boundary(i) {
                continue;
            }
            let x = self.grid.position(i);
            for t in [0.0, 0.5, 1.0] {
                let v = self.velocity.eval(t, &x[..n]);
                if v[..n].iter().any(|c| c.abs() > 1e-10) {
                    return Err(Error::ScenarioRejected(format!(
                        "velocity {v:?} does not vanish at boundary node {x:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `Y(1,x)` by RK4.
    pub fn flow_end(&self, x: &[f64]) -> Result<[f64; 3]> {
        clamp_to_domain(
            flow_point(self.velocity.as_ref(), x, 0.0, 1.0, self.flow_steps),
            self.dim(),
        )
    }

    /// Endpoint pair `(I_A(x), I_B(Y(1,x)))`.
    fn endpoints(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let y = self.flow_end(x)?;
        Ok((self.start.eval(x)?, self.end.eval(&y[..self.dim()])?))
    }

    /// `z(t,y)` in Eulerian coordinates.
    pub fn rate(&self, t: f64, y: &[f64]) -> Result<f64> {
        match &self.rate {
            RateSource::Zero => Ok(0.0),
            RateSource::Expr(e) => Ok(e.eval(t, y).max(0.0)),
            RateSource::EndpointDistance => {
                let n = self.dim();
                let steps = ((self.flow_steps as f64 * t).ceil() as usize).max(1);
                let x = clamp_to_domain(flow_point(self.velocity.as_ref(), y, t, 0.0, steps), n)?;
                let (a, b) = self.endpoints(&x[..n])?;
                Ok(self.kind().dist(&a, &b))
            }
        }
    }

    /// `∫₀¹ z(s, Y(s,x)) ds` by Simpson's rule on the RK4 steps.
    pub fn total_rate(&self, x: &[f64]) -> Result<f64> {
        match &self.rate {
            RateSource::Zero => Ok(0.0),
            RateSource::EndpointDistance => {
                let (a, b) = self.endpoints(x)?;
                Ok(self.kind().dist(&a, &b))
            }
            RateSource::Expr(_) => {
                let n = self.dim();
                let s = self.flow_steps;
                let h = 1.0 / s as f64;
                let mut y = [0.0; 3];
                y[..n].copy_from_slice(&x[..n]);
                let mut vals = vec![self.rate(0.0, &y[..n])?];
                for j in 0..s {
                    y = flow_point(self.velocity.as_ref(), &y[..n], j as f64 * h, (j + 1) as f64 * h, 1);
                    vals.push(self.rate((j + 1) as f64 * h, &y[..n])?);
                }
                Ok(simpson(&vals, h))
            }
        }
    }

    /// `J = ∫₀¹ ∫ L[v,v] + z²/δ dx dt`, Simpson in time over `flow_steps`
    /// intervals, trapezoidal in space.
    pub fn continuous_energy(&self, params: &EnergyParams) -> Result<f64> {
        self.check()?;
        let n = self.dim();
        let s = self.flow_steps;
        let h = 1.0 / s as f64;
        let integrand: Result<Vec<f64>> = (0..=s)
            .into_par_iter()
            .map(|j| {
                let t = j as f64 * h;
                let mut total = 0.0;
                if !self.velocity.is_zero() {
                    let v: Vec<f64> = (0..self.grid.len())
                        .flat_map(|i| self.velocity.eval(t, &self.grid.position(i)[..n])[..n].to_vec())
                        .collect();
                    total += dissipation(&self.grid, &v, &params.density, &params.reg)?;
                }
                if !matches!(self.rate, RateSource::Zero) {
                    let z2: Result<Vec<f64>> = (0..self.grid.len())
                        .map(|i| {
                            let z = self.rate(t, &self.grid.position(i)[..n])?;
                            Ok(self.grid.weight(i) * z * z)
                        })
                        .collect();
                    total += pairwise_sum(&z2?) / params.coupling.delta;
                }
                Ok(total)
            })
            .collect();
        Ok(simpson(&integrand?, h))
    }

    /// `w_{K,k}(x) = K∫_{t_{k−1}}^{t_k} v(s,x) ds` at the nodes by Simpson's rule.
    pub fn averaged_velocities(&self, k_total: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let tg = TimeGrid { k: k_total };
        let sub = self.samples_per_step;
        (1..=k_total)
            .map(|k| {
                let (lo, hi) = (tg.node(k - 1), tg.node(k));
                let h = (hi - lo) / sub as f64;
                (0..self.grid.len())
                    .flat_map(|i| {
                        let x = self.grid.position(i);
                        let vals: Vec<[f64; 3]> = (0..=sub)
                            .map(|j| self.velocity.eval(lo + j as f64 * h, &x[..n]))
                            .collect();
                        (0..n)
                            .map(|a| {
                                let comp: Vec<f64> = vals.iter().map(|v| v[a]).collect();
                                simpson(&comp, h) * k_total as f64
                            })
                            .collect::<Vec<f64>>()
                    })
                    .collect()
            })
            .collect()
    }

    /// Rate integrals along `Y_K(·,x)` up to `t_{upto}`.
    fn trajectory(&self, phis: &[Deformation], upto: usize, x: &[f64]) -> Result<Trajectory> {
        let n = self.dim();
        let k_total = phis.len();
        let mut cumulative = vec![0.0; upto + 1];
        if matches!(self.rate, RateSource::Zero) {
            return Ok(Trajectory { cumulative });
        }
        let sub = self.samples_per_step;
        let tau = 1.0 / k_total as f64;
        let mut p = [0.0; 3];
        p[..n].copy_from_slice(&x[..n]);
        for k in 1..=upto {
            let q = phis[k - 1].eval(&p[..n])?;
            let lo = (k - 1) as f64 * tau;
            let vals: Result<Vec<f64>> = (0..=sub)
                .map(|j| {
                    let s = j as f64 / sub as f64;
                    let mut y = [0.0; 3];
                    for a in 0..n {
                        y[a] = p[a] + s * (q[a] - p[a]);
                    }
                    self.rate(lo + s * tau, &y[..n])
                })
                .collect();
            cumulative[k] = cumulative[k - 1] + simpson(&vals?, tau / sub as f64);
            p = q;
        }
        Ok(Trajectory { cumulative })
    }

    /// `max(‖z(·,Y_K) − z(·,Y)‖_{L²((0,1)×Ω)}, 1/K)` on the sampled nodes.
    fn beta(&self, phis: &[Deformation]) -> Result<f64> {
        let k_total = phis.len();
        let floor = 1.0 / k_total as f64;
        if matches!(self.rate, RateSource::Zero) {
            return Ok(floor);
        }
        let n = self.dim();
        let sub = self.samples_per_step;
        let total = k_total * sub;
        let exact = integrate_flow(self.velocity.as_ref(), &self.grid, total);
        let mut boundary = vec![exact[0].clone()];
        for phi in phis {
            let prev = boundary.last().expect("nonempty");
            let next: Result<Vec<[f64; 3]>> = prev.chunks_exact(n).map(|p| phi.eval(p)).collect();
            boundary.push(next?.iter().flat_map(|p| p[..n].to_vec()).collect());
        }
        let h = 1.0 / total as f64;
        let per_time: Result<Vec<f64>> = (0..=total)
            .into_par_iter()
            .map(|j| {
                let t = j as f64 * h;
                let k = (j / sub).min(k_total - 1);
                let s = (j - k * sub) as f64 / sub as f64;
                let mut acc = Vec::with_capacity(self.grid.len());
                for i in 0..self.grid.len() {
                    let mut yk = [0.0; 3];
                    for a in 0..n {
                        let (p, q) = (boundary[k][i * n + a], boundary[k + 1][i * n + a]);
                        yk[a] = p + s * (q - p);
                    }
                    let diff = self.rate(t, &yk[..n])? - self.rate(t, &exact[j][i * n..i * n + n])?;
                    acc.push(self.grid.weight(i) * diff * diff);
                }
                Ok(pairwise_sum(&acc))
            })
            .collect();
        let per_time = per_time?;
        // Simpson on each step keeps the quadrature aligned with the kinks.
        let mut l2 = 0.0;
        for k in 0..k_total {
            l2 += simpson(&per_time[k * sub..=(k + 1) * sub], h);
        }
        Ok(l2.max(0.0).sqrt().max(floor))
    }

    /// Recovery path for `K` steps: averaged velocities, deformations
    /// `Id + w_k/K` and images blended along the discrete flow.
    pub fn recovery_sequence(&self, k_total: usize, params: &EnergyParams) -> Result<Recovery> {
        self.check()?;
        if k_total < 2 {
            return Err(Error::Contract(format!("K = {k_total} must be at least 2")));
        }
        let n = self.dim();
        let kind = self.kind();
        let kf = k_total as f64;
        let eps = params.coupling.epsilon;
        let phis: Vec<Deformation> = self
            .averaged_velocities(k_total)
            .into_iter()
            .map(|w| Deformation::new(self.grid.clone(), w.iter().map(|c| c / kf).collect(), eps))
            .collect::<Result<_>>()?;
        let c1_norm = phis
            .iter()
            .map(|phi| {
                let jac = phi.jacobian3();
                let d = jac
                    .iter()
                    .map(|j| (j - nalgebra::Matrix3::identity()).abs().max())
                    .fold(0.0, f64::max);
                d.max(phi.max_displacement())
            })
            .fold(0.0, f64::max);
        if c1_norm >= 1.0 {
            return Err(Error::Contract(format!(
                "max C1 distance of the deformations is {c1_norm:.3}; increase K"
            )));
        }
        for phi in &phis {
            phi.check_admissible()?;
        }

        // Compatibility and branch statistics in Lagrangian node coordinates.
        let beta = self.beta(&phis)?;
        let cutoff = beta.sqrt();
        let stats: Result<Vec<(f64, u8)>> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let x = self.grid.position(i);
                let (a, b) = self.endpoints(&x[..n])?;
                let z1 = self.total_rate(&x[..n])?;
                let branch = if z1 == 0.0 { 0 } else if z1 <= cutoff { 1 } else { 2 };
                Ok((kind.dist(&a, &b) - z1, branch))
            })
            .collect();
        let stats = stats?;
        let mut branches = BranchCounts::default();
        for (i, (excess, branch)) in stats.iter().enumerate() {
            if *excess > self.compatibility_tol {
                return Err(Error::ScenarioRejected(format!(
                    "d(I_A, I_B(Y(1))) exceeds the integrated rate by {excess:e} at node {i}"
                )));
            }
            match branch {
                0 => branches.zero += 1,
                1 => branches.guarded += 1,
                _ => branches.regular += 1,
            }
        }

        let blend = |x: &[f64], k: usize| -> Result<Vec<f64>> {
            let a = self.start.eval(x)?;
            if k == 0 {
                return Ok(a);
            }
            let z1 = self.total_rate(x)?;
            if z1 == 0.0 {
                return Ok(a);
            }
            let cum = self.trajectory(&phis, k, x)?.cumulative[k];
            let alpha = if z1 <= cutoff { cum / cutoff } else { cum / z1 };
            let y = self.flow_end(x)?;
            let b = self.end.eval(&y[..n])?;
            Ok(kind.geodesic(&a, &b, alpha.clamp(0.0, 1.0)))
        };

        let mut images = Vec::with_capacity(k_total + 1);
        for k in 0..=k_total {
            let values: Result<Vec<Vec<f64>>> = (0..self.grid.len())
                .into_par_iter()
                .map(|i| {
                    let mut x = self.grid.position(i);
                    for phi in phis[..k].iter().rev() {
                        x = phi.inverse_point(&x[..n])?;
                    }
                    blend(&x[..n], k)
                })
                .collect();
            images.push(ManifoldImage::new(self.grid.clone(), kind, values?.concat())?);
        }
        let path = DiscretePath::new(images, phis, params)?;
        Ok(Recovery {
            j_k: path.energy(),
            path,
            beta_k: beta,
            c1_norm,
            branches,
        })
    }
}
