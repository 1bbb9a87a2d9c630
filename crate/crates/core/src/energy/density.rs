use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the hyperelastic density
///
/// `W(A) = μ|Aˢʸᵐ−𝟙|² + ((λ−κ)/2)(tr A − n)² + κ h(det A) + β h(det A)²`
///
/// with `h(d) = d − 1 − log d`. `h` has a double zero at `d = 1`, so the
/// quadratic form at the identity is `(λ/2)(tr B)² + μ tr((Bˢʸᵐ)²)` for every
/// `κ ∈ [0, λ]`; `κ` controls the cubic Taylor term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub lambda: f64,
    pub mu: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl DensityParams {
    /// `β = μ/10`, `κ = λ/2`.
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let p = Self {
            lambda,
            mu,
            beta: mu / 10.0,
            kappa: lambda / 2.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.mu > 0.0) {
            return Err(Error::Contract(format!(
                "lambda = {}, mu = {} must be positive",
                self.lambda, self.mu
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Contract(format!("beta = {} must be >= 0", self.beta)));
        }
        if !(0.0..=self.lambda).contains(&self.kappa) {
            return Err(Error::Contract(format!(
                "kappa = {} must lie in [0, lambda]",
                self.kappa
            )));
        }
        Ok(())
    }
}

impl Default for DensityParams {
    fn default() -> Self {
        Self::new(1.0, 1.0).expect("valid defaults")
    }
}

fn h(d: f64) -> f64 {
    d - 1.0 - d.ln()
}

fn dh(d: f64) -> f64 {
    1.0 - 1.0 / d
}

/// Convex function of `(A, d)` that reproduces `W(A)` at `d = det A`.
pub fn polyconvex_lift(a: &DMatrix<f64>, d: f64, p: &DensityParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(d));
    }
    let n = a.nrows() as f64;
    let sym = (a + a.transpose()) * 0.5 - DMatrix::identity(a.nrows(), a.ncols());
    let tr = a.trace() - n;
    let hd = h(d);
    Ok(p.mu * sym.norm_squared()
        + 0.5 * (p.lambda - p.kappa) * tr * tr
        + p.kappa * hd
        + p.beta * hd * hd)
}

/// `W` on a 3×3 matrix (2×2 inputs padded with a unit diagonal entry, which
/// leaves every term unchanged).
pub(crate) fn w3(a: &Matrix3<f64>, p: &DensityParams) -> Result<f64> {
    let d = a.determinant();
    if !(d > 0.0) {
        return Err(Error::Domain(d));
    }
    let sym = (a + a.transpose()) * 0.5 - Matrix3::identity();
    let tr = a.trace() - 3.0;
    let hd = h(d);
    Ok(p.mu * sym.norm_squared()
        + 0.5 * (p.lambda - p.kappa) * tr * tr
        + p.kappa * hd
        + p.beta * hd * hd)
}

pub(crate) fn dw3(a: &Matrix3<f64>, p: &DensityParams) -> Result<Matrix3<f64>> {
    let d = a.determinant();
    if !(d > 0.0) {
        return Err(Error::Domain(d));
    }
    let sym = (a + a.transpose()) * 0.5 - Matrix3::identity();
    let tr = a.trace() - 3.0;
    let cof = a.try_inverse().ok_or(Error::Domain(d))?.transpose() * d;
    let hd = h(d);
    let scale = (p.kappa + 2.0 * p.beta * hd) * dh(d);
    Ok(sym * (2.0 * p.mu) + Matrix3::identity() * ((p.lambda - p.kappa) * tr) + cof * scale)
}

fn pad(a: &DMatrix<f64>) -> Result<Matrix3<f64>> {
    let n = a.nrows();
    if n != a.ncols() || !(2..=3).contains(&n) {
        return Err(Error::Contract(format!("expected 2×2 or 3×3, got {}×{}", n, a.ncols())));
    }
    let mut m = Matrix3::identity();
    m.view_mut((0, 0), (n, n)).copy_from(a);
    Ok(m)
}

/// `W(A)` for `A ∈ GL⁺(n)`, `n ∈ {2,3}`.
pub fn density_w(a: &DMatrix<f64>, p: &DensityParams) -> Result<f64> {
    w3(&pad(a)?, p)
}

/// `DW(A)`.
pub fn density_gradient(a: &DMatrix<f64>, p: &DensityParams) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    Ok(dw3(&pad(a)?, p)?.view((0, 0), (n, n)).into_owned())
}

/// The quadratic form `(λ/2)(tr B)² + μ tr((Bˢʸᵐ)²)`.
pub fn quadratic_form(b: &DMatrix<f64>, p: &DensityParams) -> f64 {
    let sym = (b + b.transpose()) * 0.5;
    0.5 * p.lambda * b.trace().powi(2) + p.mu * (&sym * &sym).trace()
}
