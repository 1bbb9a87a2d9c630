//! Hyperbolic space in Minkowski (hyperboloid) coordinates.
//!
//! A point of `H^n` is `x ∈ R^{n+1}` with `⟨x,x⟩_M = -1`, `x₀ > 0`, where
//! `⟨x,y⟩_M = -x₀y₀ + Σ xᵢyᵢ`. Tangents at `x` are ambient vectors with
//! `⟨x,v⟩_M = 0`.

const COINCIDENT: f64 = 1e-12;
const SMALL_ANGLE: f64 = 1e-6;

pub fn minkowski(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = -x[0] * y[0];
    for i in 1..x.len() {
        acc += x[i] * y[i];
    }
    acc
}

/// Rescales `x` back onto the upper sheet.
pub fn renormalize(x: &mut [f64]) {
    let spatial: f64 = x[1..].iter().map(|v| v * v).sum();
    x[0] = (1.0 + spatial).sqrt();
}

pub fn is_on_sheet(x: &[f64], tol: f64) -> bool {
    if x.iter().any(|v| !v.is_finite()) || x[0] <= 0.0 {
        return false;
    }
    (minkowski(x, x) + 1.0).abs() <= tol * x[0].powi(2).max(1.0)
}

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    // 2 asinh(|x - y|_M / 2) avoids arcosh cancellation near coincidence.
    let mut chord2 = -(x[0] - y[0]).powi(2);
    for i in 1..x.len() {
        chord2 += (x[i] - y[i]).powi(2);
    }
    2.0 * (chord2.max(0.0).sqrt() * 0.5).asinh()
}

pub fn geodesic(x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
    if t == 0.0 {
        out.copy_from_slice(x);
        return;
    }
    if t == 1.0 {
        out.copy_from_slice(y);
        return;
    }
    let d = distance(x, y);
    if d < COINCIDENT {
        out.copy_from_slice(x);
        return;
    }
    let sd = d.sinh();
    let fa = ((1.0 - t) * d).sinh() / sd;
    let fb = (t * d).sinh() / sd;
    for i in 0..x.len() {
        out[i] = fa * x[i] + fb * y[i];
    }
    renormalize(out);
}

pub fn log(x: &[f64], y: &[f64], out: &mut [f64]) {
    let d = distance(x, y);
    if d < COINCIDENT {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let xy = minkowski(x, y);
    let scale = d / d.sinh();
    for i in 0..x.len() {
        out[i] = scale * (y[i] + xy * x[i]);
    }
    project_tangent(x, out);
}

pub fn exp(x: &[f64], v: &[f64], out: &mut [f64]) {
    let nv = minkowski(v, v).max(0.0).sqrt();
    if nv < 1e-300 {
        out.copy_from_slice(x);
        return;
    }
    let c = nv.cosh();
    let s = nv.sinh() / nv;
    for i in 0..x.len() {
        out[i] = c * x[i] + s * v[i];
    }
    renormalize(out);
}

/// Removes the component of `v` normal to the sheet at `x`.
pub fn project_tangent(x: &[f64], v: &mut [f64]) {
    let c = minkowski(x, v);
    for i in 0..x.len() {
        v[i] += c * x[i];
    }
}

pub fn geodesic_velocity(x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
    let d = distance(x, y);
    if d < COINCIDENT {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let sd = d.sinh();
    let fa = -d * ((1.0 - t) * d).cosh() / sd;
    let fb = d * (t * d).cosh() / sd;
    for i in 0..x.len() {
        out[i] = fa * x[i] + fb * y[i];
    }
}

pub fn geodesic_differential(
    x: &[f64],
    y: &[f64],
    t: f64,
    dx: &[f64],
    dy: &[f64],
    out: &mut [f64],
) {
    let d = distance(x, y);
    if d < SMALL_ANGLE {
        for i in 0..x.len() {
            out[i] = (1.0 - t) * dx[i] + t * dy[i];
        }
        return;
    }
    let sd = d.sinh();
    let cd = d.cosh();
    let a1 = ((1.0 - t) * d).sinh();
    let b1 = (t * d).sinh();
    let f = a1 / sd;
    let g = b1 / sd;
    let fp = ((1.0 - t) * ((1.0 - t) * d).cosh() * sd - a1 * cd) / (sd * sd);
    let gp = (t * (t * d).cosh() * sd - b1 * cd) / (sd * sd);
    let dc = -minkowski(dx, y) - minkowski(x, dy);
    let dtheta = dc / sd;
    for i in 0..x.len() {
        out[i] = f * dx[i] + g * dy[i] + (fp * x[i] + gp * y[i]) * dtheta;
    }
}

/// Poincaré upper half-plane `(a, b)`, `b > 0`, to `H²` hyperboloid coordinates.
pub fn from_half_plane(a: f64, b: f64) -> [f64; 3] {
    let r = a * a + b * b;
    [(r + 1.0) / (2.0 * b), a / b, (r - 1.0) / (2.0 * b)]
}

/// Inverse of [`from_half_plane`].
pub fn to_half_plane(x: &[f64]) -> (f64, f64) {
    let b = 1.0 / (x[0] - x[2]);
    (x[1] * b, b)
}

/// Univariate Gaussian `N(mean, sd²)` as a point of `H²`.
///
/// The Fisher–Rao metric on Gaussians is `√2` times the hyperbolic metric of
/// the half-plane point `(mean/√2, sd)`.
pub fn from_gaussian(mean: f64, sd: f64) -> [f64; 3] {
    from_half_plane(mean / std::f64::consts::SQRT_2, sd)
}

pub fn to_gaussian(x: &[f64]) -> (f64, f64) {
    let (a, b) = to_half_plane(x);
    (a * std::f64::consts::SQRT_2, b)
}
