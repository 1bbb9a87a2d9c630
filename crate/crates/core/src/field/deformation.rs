use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;

use super::grid::{derivative_stencil, locate, to_index_space, GridSpec, DOMAIN_TOL};
use crate::error::{Error, Result};

/// Residual accepted for pointwise inversion.
pub const INVERSE_TOL: f64 = 1e-12;
const MAX_INVERSE_STEPS: usize = 100;

/// A deformation `φ = Id + u` with `u = 0` on the boundary.
///
/// Grid deformations evaluate `u` by multilinear interpolation of the node
/// values. The result of [`Deformation::invert`] keeps its source map and
/// evaluates by exact pointwise inversion, so inverting twice returns the
/// original map.
#[derive(Clone, Debug)]
pub struct Deformation {
    grid: GridSpec,
    disp: Arc<Vec<f64>>,
    epsilon: f64,
    inverse_of: Option<Arc<Deformation>>,
}

impl PartialEq for Deformation {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.epsilon == other.epsilon && self.disp == other.disp
    }
}

impl Deformation {
    pub fn new(grid: GridSpec, mut disp: Vec<f64>, epsilon: f64) -> Result<Self> {
        let n = grid.dim();
        if disp.len() != grid.len() * n {
            return Err(Error::GridMismatch(format!(
                "displacement of {} reals for {} nodes",
                disp.len(),
                grid.len()
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Contract(format!("epsilon {epsilon} must be positive")));
        }
        if disp.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inadmissible("non-finite displacement".into()));
        }
        for i in 0..grid.len() {
            if grid.is_boundary(i) {
                let u = &mut disp[i * n..(i + 1) * n];
                if u.iter().any(|v| v.abs() > 1e-12) {
                    return Err(Error::Inadmissible(format!(
                        "nonzero boundary displacement {u:?} at node {i}"
                    )));
                }
                u.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(Self {
            grid,
            disp: Arc::new(disp),
            epsilon,
            inverse_of: None,
        })
    }

    pub fn identity(grid: GridSpec, epsilon: f64) -> Result<Self> {
        let len = grid.len() * grid.dim();
        Self::new(grid, vec![0.0; len], epsilon)
    }

    /// Samples a displacement function at the nodes.
    pub fn from_fn(grid: GridSpec, epsilon: f64, u: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let n = grid.dim();
        let mut disp = Vec::with_capacity(grid.len() * n);
        for i in 0..grid.len() {
            let v = u(&grid.position(i)[..n]);
            disp.extend_from_slice(&v[..n]);
        }
        Self::new(grid, disp, epsilon)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    /// `Id + s·u` as a grid deformation.
    pub fn scaled(&self, s: f64) -> Result<Deformation> {
        Deformation::new(
            self.grid.clone(),
            self.disp.iter().map(|v| s * v).collect(),
            self.epsilon,
        )
    }

    pub fn displacement(&self) -> &[f64] {
        &self.disp
    }

    pub fn node_displacement(&self, idx: usize) -> &[f64] {
        let n = self.grid.dim();
        &self.disp[idx * n..(idx + 1) * n]
    }

    pub fn is_identity(&self) -> bool {
        self.disp.iter().all(|v| *v == 0.0)
    }

    pub fn is_inverse_map(&self) -> bool {
        self.inverse_of.is_some()
    }

    /// `φ(x)` at every node, flattened.
    pub fn positions(&self) -> Vec<f64> {
        let n = self.grid.dim();
        let mut out = self.disp.to_vec();
        for i in 0..self.grid.len() {
            let x = self.grid.position(i);
            for a in 0..n {
                out[i * n + a] += x[a];
            }
        }
        out
    }

    /// Interpolated displacement and its physical-space Jacobian at `p`.
    fn interp_disp(&self, p: &[f64]) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let n = self.grid.dim();
        let t = to_index_space(&self.grid, p)?;
        let shape = self.grid.shape();
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..n {
            let (j, s) = locate(t[a], shape[a]);
            cell[a] = j;
            frac[a] = s;
        }
        let mut u = Vector3::zeros();
        let mut du = Matrix3::zeros();
        for c in 0..(1usize << n) {
            let mut mi = cell;
            let mut w = 1.0;
            let mut dw = [1.0; 3];
            for a in 0..n {
                let bit = (c >> a) & 1;
                mi[a] += bit;
                let (wa, dwa) = if bit == 1 { (frac[a], 1.0) } else { (1.0 - frac[a], -1.0) };
                w *= wa;
                for (b, d) in dw.iter_mut().enumerate().take(n) {
                    *d *= if a == b { dwa * (shape[a] - 1) as f64 } else { wa };
                }
            }
            let idx = self.grid.linear_index(&mi[..n]);
            let uc = self.node_displacement(idx);
            for i in 0..n {
                u[i] += w * uc[i];
                for b in 0..n {
                    du[(i, b)] += dw[b] * uc[i];
                }
            }
        }
        Ok((u, du))
    }

    /// `φ(p)` at an arbitrary point of the domain.
    pub fn eval(&self, p: &[f64]) -> Result<[f64; 3]> {
        if let Some(src) = &self.inverse_of {
            return src.inverse_point(p);
        }
        let (u, _) = self.interp_disp(p)?;
        let mut out = [0.0; 3];
        for a in 0..self.grid.dim() {
            out[a] = p[a] + u[a];
        }
        Ok(out)
    }

    /// `Dφ(p)`, padded with the identity to 3×3 when `n = 2`.
    pub(crate) fn jacobian_at3(&self, p: &[f64]) -> Result<Matrix3<f64>> {
        if let Some(src) = &self.inverse_of {
            let x = src.inverse_point(p)?;
            let j = src.jacobian_at3(&x)?;
            return j.try_inverse().ok_or_else(|| Error::Inadmissible("singular Jacobian".into()));
        }
        let (_, du) = self.interp_disp(p)?;
        Ok(Matrix3::identity() + du)
    }

    pub fn jacobian_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.grid.dim();
        Ok(self.jacobian_at3(p)?.view((0, 0), (n, n)).into_owned())
    }

    /// Solves `φ(x) = y`: Newton on the interpolated map with a fixed-point
    /// fallback, both capped at 100 steps.
    pub fn inverse_point(&self, y: &[f64]) -> Result<[f64; 3]> {
        if let Some(src) = &self.inverse_of {
            return src.eval(y);
        }
        let n = self.grid.dim();
        to_index_space(&self.grid, y)?;
        let clamp = |x: &mut [f64; 3]| x.iter_mut().take(n).for_each(|v| *v = v.clamp(0.0, 1.0));
        let residual = |x: &[f64; 3]| -> Result<(f64, Vector3<f64>)> {
            let fx = self.eval(x)?;
            let mut r = Vector3::zeros();
            for a in 0..n {
                r[a] = fx[a] - y[a];
            }
            Ok((r.amax(), r))
        };
        let (u0, _) = self.interp_disp(y)?;
        let mut x = [0.0; 3];
        for a in 0..n {
            x[a] = y[a] - u0[a];
        }
        clamp(&mut x);
        let (mut res, mut r) = residual(&x)?;
        for _ in 0..MAX_INVERSE_STEPS {
            if res <= INVERSE_TOL {
                return Ok(x);
            }
            let j = self.jacobian_at3(&x)?;
            let Some(step) = j.try_inverse().map(|ji| ji * r) else { break };
            let mut cand = x;
            for a in 0..n {
                cand[a] -= step[a];
            }
            clamp(&mut cand);
            let (cres, cr) = residual(&cand)?;
            if !(cres < res) {
                break;
            }
            x = cand;
            res = cres;
            r = cr;
        }
        for _ in 0..MAX_INVERSE_STEPS {
            if res <= INVERSE_TOL {
                return Ok(x);
            }
            let (u, _) = self.interp_disp(&x)?;
            for a in 0..n {
                x[a] = y[a] - u[a];
            }
            clamp(&mut x);
            res = residual(&x)?.0;
        }
        if res <= INVERSE_TOL {
            Ok(x)
        } else {
            Err(Error::InversionFailure {
                node: usize::MAX,
                residual: res,
            })
        }
    }

    /// The inverse deformation `φ⁻¹`, sampled at the nodes.
    pub fn invert(&self) -> Result<Deformation> {
        if let Some(src) = &self.inverse_of {
            return Ok((**src).clone());
        }
        let n = self.grid.dim();
        let disp: Result<Vec<[f64; 3]>> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let x = self.grid.position(i);
                if self.grid.is_boundary(i) {
                    return Ok([0.0; 3]);
                }
                let p = self.inverse_point(&x[..n]).map_err(|e| match e {
                    Error::InversionFailure { residual, .. } => {
                        Error::InversionFailure { node: i, residual }
                    }
                    other => other,
                })?;
                let mut d = [0.0; 3];
                for a in 0..n {
                    d[a] = p[a] - x[a];
                }
                Ok(d)
            })
            .collect();
        let disp: Vec<f64> = disp?.iter().flat_map(|d| d[..n].to_vec()).collect();
        Ok(Deformation {
            grid: self.grid.clone(),
            disp: Arc::new(disp),
            epsilon: self.epsilon,
            inverse_of: Some(Arc::new(self.clone())),
        })
    }

    /// Node Jacobians `Dφ` from finite differences of the node displacements,
    /// padded with the identity to 3×3 when `n = 2`.
    pub(crate) fn jacobian3(&self) -> Vec<Matrix3<f64>> {
        jacobian_field(&self.grid, &self.disp)
    }

    pub fn jacobian(&self) -> Vec<DMatrix<f64>> {
        let n = self.grid.dim();
        self.jacobian3()
            .iter()
            .map(|j| j.view((0, 0), (n, n)).into_owned())
            .collect()
    }

    pub fn jacobian_det(&self) -> Vec<f64> {
        self.jacobian3().iter().map(|j| j.determinant()).collect()
    }

    pub fn min_jacobian_det(&self) -> f64 {
        self.jacobian_det().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Checks `det Dφ > ε` at every node and `φ(x) ∈ [0,1]^n`.
    pub fn check_admissible(&self) -> Result<()> {
        let min = self.min_jacobian_det();
        if !(min > self.epsilon) {
            return Err(Error::Inadmissible(format!(
                "min det Dφ = {min} <= epsilon = {}",
                self.epsilon
            )));
        }
        let n = self.grid.dim();
        for p in self.positions().chunks_exact(n) {
            if p.iter().any(|v| *v < -DOMAIN_TOL || *v > 1.0 + DOMAIN_TOL) {
                return Err(Error::Inadmissible(format!("node leaves the domain: {p:?}")));
            }
        }
        Ok(())
    }

    pub fn is_admissible(&self) -> bool {
        self.check_admissible().is_ok()
    }

    /// Max-norm of `u` over nodes.
    pub fn max_displacement(&self) -> f64 {
        self.disp.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// `Id + Du` at every node from a flat displacement field.
pub(crate) fn jacobian_field(grid: &GridSpec, disp: &[f64]) -> Vec<Matrix3<f64>> {
    let n = grid.dim();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mi = grid.multi_index(i);
            let mut j = Matrix3::identity();
            for b in 0..n {
                let stride = grid.stride(b) as isize;
                for (off, c) in derivative_stencil(mi[b], grid.shape()[b], grid.spacing(b)) {
                    if c == 0.0 {
                        continue;
                    }
                    let nb = (i as isize + off * stride) as usize;
                    for a in 0..n {
                        j[(a, b)] += c * disp[nb * n + a];
                    }
                }
            }
            j
        })
        .collect()
}

/// Node displacement difference `u − v` in max-norm.
pub fn max_displacement_difference(a: &Deformation, b: &Deformation) -> Result<f64> {
    a.grid().ensure_same(b.grid())?;
    Ok(a
        .displacement()
        .iter()
        .zip(b.displacement())
        .fold(0.0, |m: f64, (x, y)| m.max((x - y).abs())))
}
