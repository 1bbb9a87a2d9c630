//! Hadamard manifolds used as image ranges.
//!
//! [`ManifoldKind`] carries the raw slice kernels used by the image and energy
//! code; [`Point`] and [`Tangent`] are checked value types on top of them.

pub mod hyperboloid;
pub mod spd;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payload-wise tolerance for point equality.
pub const POINT_EQ_TOL: f64 = 1e-10;
/// Tolerance of the hyperboloid sheet and tangency constraints.
pub const SHEET_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "dim", rename_all = "lowercase")]
pub enum ManifoldKind {
    /// `R^C` with the Euclidean norm.
    Euclidean(usize),
    /// SPD matrices of order 2 or 3, affine-invariant metric.
    Spd(usize),
    /// Hyperbolic space `H^n`, `n ≥ 2`, hyperboloid model.
    Hyperboloid(usize),
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldKind::Euclidean(c) => write!(f, "Euclidean({c})"),
            ManifoldKind::Spd(n) => write!(f, "SPD({n})"),
            ManifoldKind::Hyperboloid(n) => write!(f, "Hyperboloid({n})"),
        }
    }
}

macro_rules! spd_dispatch {
    ($n:expr, $f:ident ( $($arg:expr),* )) => {
        match $n {
            2 => spd::$f::<2>($($arg),*),
            3 => spd::$f::<3>($($arg),*),
            _ => unreachable!("SPD order validated at construction"),
        }
    };
}

impl ManifoldKind {
    /// Checks the descriptor itself (`C ≥ 1`, SPD order 2 or 3, `n ≥ 2`).
    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            ManifoldKind::Euclidean(c) => c >= 1,
            ManifoldKind::Spd(n) => n == 2 || n == 3,
            ManifoldKind::Hyperboloid(n) => n >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("unsupported manifold kind {self}")))
        }
    }

    /// Number of reals per point (and per tangent).
    pub fn payload_dim(&self) -> usize {
        match *self {
            ManifoldKind::Euclidean(c) => c,
            ManifoldKind::Spd(n) => spd::packed_len(n),
            ManifoldKind::Hyperboloid(n) => n + 1,
        }
    }

    /// A canonical base point: origin, identity matrix, or hyperboloid apex.
    pub fn base_point(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.payload_dim()];
        match *self {
            ManifoldKind::Euclidean(_) => {}
            ManifoldKind::Spd(n) => {
                let mut idx = 0;
                for i in 0..n {
                    p[idx] = 1.0;
                    idx += n - i;
                }
            }
            ManifoldKind::Hyperboloid(_) => p[0] = 1.0,
        }
        p
    }

    pub fn validate(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.payload_dim() {
            return Err(Error::InvalidPoint {
                kind: *self,
                reason: format!("payload length {} != {}", coords.len(), self.payload_dim()),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint {
                kind: *self,
                reason: "non-finite payload".into(),
            });
        }
        match *self {
            ManifoldKind::Euclidean(_) => Ok(()),
            ManifoldKind::Spd(n) => {
                if spd_dispatch!(n, is_positive_definite(coords)) {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint {
                        kind: *self,
                        reason: "matrix is not positive definite".into(),
                    })
                }
            }
            ManifoldKind::Hyperboloid(_) => {
                if hyperboloid::is_on_sheet(coords, SHEET_TOL) {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint {
                        kind: *self,
                        reason: format!(
                            "<x,x>_M = {} (x0 = {})",
                            hyperboloid::minkowski(coords, coords),
                            coords[0]
                        ),
                    })
                }
            }
        }
    }

    /// Riemannian distance between two valid payloads.
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        if a == b {
            return 0.0;
        }
        match *self {
            ManifoldKind::Euclidean(_) => euclid_norm2(a, b).sqrt(),
            ManifoldKind::Spd(n) => spd_dispatch!(n, distance(a, b)),
            ManifoldKind::Hyperboloid(_) => hyperboloid::distance(a, b),
        }
    }

    /// `γ_{a,b}(t)`; returns `a` bit-exactly at `t = 0` and `b` at `t = 1`.
    pub fn geodesic_into(&self, a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
        match *self {
            ManifoldKind::Euclidean(_) => {
                if t == 0.0 {
                    out.copy_from_slice(a);
                } else if t == 1.0 {
                    out.copy_from_slice(b);
                } else {
                    for i in 0..a.len() {
                        out[i] = (1.0 - t) * a[i] + t * b[i];
                    }
                }
            }
            ManifoldKind::Spd(n) => spd_dispatch!(n, geodesic(a, b, t, out)),
            ManifoldKind::Hyperboloid(_) => hyperboloid::geodesic(a, b, t, out),
        }
    }

    pub fn geodesic(&self, a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; a.len()];
        self.geodesic_into(a, b, t, &mut out);
        out
    }

    pub fn log_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        match *self {
            ManifoldKind::Euclidean(_) => {
                for i in 0..a.len() {
                    out[i] = b[i] - a[i];
                }
            }
            ManifoldKind::Spd(n) => spd_dispatch!(n, log(a, b, out)),
            ManifoldKind::Hyperboloid(_) => hyperboloid::log(a, b, out),
        }
    }

    pub fn exp_into(&self, a: &[f64], v: &[f64], out: &mut [f64]) {
        match *self {
            ManifoldKind::Euclidean(_) => {
                for i in 0..a.len() {
                    out[i] = a[i] + v[i];
                }
            }
            ManifoldKind::Spd(n) => spd_dispatch!(n, exp(a, v, out)),
            ManifoldKind::Hyperboloid(_) => hyperboloid::exp(a, v, out),
        }
    }

    /// Riemannian inner product of two tangents at `base`.
    pub fn inner(&self, base: &[f64], u: &[f64], v: &[f64]) -> f64 {
        match *self {
            ManifoldKind::Euclidean(_) => u.iter().zip(v).map(|(x, y)| x * y).sum(),
            ManifoldKind::Spd(n) => spd_dispatch!(n, inner(base, u, v)),
            ManifoldKind::Hyperboloid(_) => hyperboloid::minkowski(u, v),
        }
    }

    /// Velocity of `s ↦ γ_{a,b}(s)` at `s = t`.
    pub fn geodesic_velocity_into(&self, a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
        match *self {
            ManifoldKind::Euclidean(_) => {
                for i in 0..a.len() {
                    out[i] = b[i] - a[i];
                }
            }
            ManifoldKind::Spd(n) => spd_dispatch!(n, geodesic_velocity(a, b, t, out)),
            ManifoldKind::Hyperboloid(_) => hyperboloid::geodesic_velocity(a, b, t, out),
        }
    }

    /// Differential of `(a, b) ↦ γ_{a,b}(t)` in direction `(da, db)`.
    pub fn geodesic_differential_into(
        &self,
        a: &[f64],
        b: &[f64],
        t: f64,
        da: &[f64],
        db: &[f64],
        out: &mut [f64],
    ) {
        match *self {
            ManifoldKind::Euclidean(_) => {
                for i in 0..a.len() {
                    out[i] = (1.0 - t) * da[i] + t * db[i];
                }
            }
            ManifoldKind::Spd(n) => spd_dispatch!(n, geodesic_differential(a, b, t, da, db, out)),
            ManifoldKind::Hyperboloid(_) => hyperboloid::geodesic_differential(a, b, t, da, db, out),
        }
    }

    /// Minimizer of `w_a d²(a,·) + w_b d²(b,·)`, i.e. `γ_{a,b}(w_b / (w_a + w_b))`.
    pub fn pair_mean_into(&self, a: &[f64], b: &[f64], wa: f64, wb: f64, out: &mut [f64]) {
        let t = wb / (wa + wb);
        self.geodesic_into(a, b, t, out);
    }
}

fn euclid_norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn same_kind(a: ManifoldKind, b: ManifoldKind) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::KindMismatch { left: a, right: b })
    }
}

/// A validated point of a Hadamard manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    kind: ManifoldKind,
    coords: Vec<f64>,
}

impl Point {
    pub fn new(kind: ManifoldKind, coords: Vec<f64>) -> Result<Self> {
        kind.check()?;
        kind.validate(&coords)?;
        Ok(Self { kind, coords })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Payload-wise equality within [`POINT_EQ_TOL`].
    pub fn approx_eq(&self, other: &Point) -> bool {
        self.kind == other.kind
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| (a - b).abs() <= POINT_EQ_TOL)
    }

    fn unchecked(kind: ManifoldKind, coords: Vec<f64>) -> Self {
        Self { kind, coords }
    }
}

/// A tangent vector attached to a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    kind: ManifoldKind,
    base: Vec<f64>,
    coords: Vec<f64>,
}

impl Tangent {
    pub fn new(base: &Point, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != base.kind.payload_dim() {
            return Err(Error::Contract("tangent length mismatch".into()));
        }
        if let ManifoldKind::Hyperboloid(_) = base.kind {
            let c = hyperboloid::minkowski(&base.coords, &coords);
            let scale = base.coords[0] * coords.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if c.abs() > SHEET_TOL * scale {
                return Err(Error::Contract(format!("tangent not orthogonal to base: {c:e}")));
            }
        }
        Ok(Self {
            kind: base.kind,
            base: base.coords.clone(),
            coords,
        })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Riemannian norm at the base point.
    pub fn norm(&self) -> f64 {
        self.kind
            .inner(&self.base, &self.coords, &self.coords)
            .max(0.0)
            .sqrt()
    }

    pub fn scaled(&self, s: f64) -> Tangent {
        Tangent {
            kind: self.kind,
            base: self.base.clone(),
            coords: self.coords.iter().map(|v| v * s).collect(),
        }
    }
}

pub fn distance(p: &Point, q: &Point) -> Result<f64> {
    same_kind(p.kind, q.kind)?;
    Ok(p.kind.dist(&p.coords, &q.coords))
}

pub fn geodesic_point(p: &Point, q: &Point, t: f64) -> Result<Point> {
    same_kind(p.kind, q.kind)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("geodesic parameter {t} outside [0,1]")));
    }
    Ok(Point::unchecked(p.kind, p.kind.geodesic(&p.coords, &q.coords, t)))
}

pub fn log_map(p: &Point, q: &Point) -> Result<Tangent> {
    same_kind(p.kind, q.kind)?;
    let mut out = vec![0.0; p.coords.len()];
    p.kind.log_into(&p.coords, &q.coords, &mut out);
    Ok(Tangent {
        kind: p.kind,
        base: p.coords.clone(),
        coords: out,
    })
}

pub fn exp_map(p: &Point, v: &Tangent) -> Result<Point> {
    same_kind(p.kind, v.kind)?;
    if v.base.iter().zip(&p.coords).any(|(a, b)| (a - b).abs() > POINT_EQ_TOL) {
        return Err(Error::Contract("tangent is not based at the given point".into()));
    }
    let mut out = vec![0.0; p.coords.len()];
    p.kind.exp_into(&p.coords, &v.coords, &mut out);
    Ok(Point::unchecked(p.kind, out))
}

pub fn weighted_pair_mean(a: &Point, b: &Point, wa: f64, wb: f64) -> Result<Point> {
    same_kind(a.kind, b.kind)?;
    if !(wa >= 0.0 && wb >= 0.0) || wa + wb <= 0.0 {
        return Err(Error::Contract(format!("pair-mean weights ({wa}, {wb}) invalid")));
    }
    let mut out = vec![0.0; a.coords.len()];
    a.kind.pair_mean_into(&a.coords, &b.coords, wa, wb, &mut out);
    Ok(Point::unchecked(a.kind, out))
}

/// Residual `d²(x,w) + d²(y,v) + 2d(x,y)d(v,w) − d²(x,v) − d²(y,w)` of the
/// four-point comparison inequality; nonnegative on CAT(0) spaces.
pub fn check_cat0(x: &Point, y: &Point, v: &Point, w: &Point) -> Result<f64> {
    for q in [y, v, w] {
        same_kind(x.kind, q.kind)?;
    }
    let d = |a: &Point, b: &Point| a.kind.dist(&a.coords, &b.coords);
    Ok(d(x, w).powi(2) + d(y, v).powi(2) + 2.0 * d(x, y) * d(v, w)
        - d(x, v).powi(2)
        - d(y, w).powi(2))
}

/// Residual `(1−t)d(x1,y1) + t d(x2,y2) − d(γ_{x1,x2}(t), γ_{y1,y2}(t))`.
pub fn check_joint_convexity(x1: &Point, x2: &Point, y1: &Point, y2: &Point, t: f64) -> Result<f64> {
    for q in [x2, y1, y2] {
        same_kind(x1.kind, q.kind)?;
    }
    let gx = geodesic_point(x1, x2, t)?;
    let gy = geodesic_point(y1, y2, t)?;
    Ok((1.0 - t) * distance(x1, y1)? + t * distance(x2, y2)? - distance(&gx, &gy)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd2(a: f64, b: f64, c: f64) -> Point {
        Point::new(ManifoldKind::Spd(2), vec![a, b, c]).unwrap()
    }

    #[test]
    fn spd_identity_distance_is_zero() {
        let i = spd2(1.0, 0.0, 1.0);
        assert_eq!(distance(&i, &i).unwrap(), 0.0);
    }

    #[test]
    fn spd_commuting_examples() {
        let e = std::f64::consts::E;
        let i = spd2(1.0, 0.0, 1.0);
        let b = spd2(e * e, 0.0, 1.0);
        assert!((distance(&i, &b).unwrap() - 2.0).abs() < 1e-12);
        let mid = geodesic_point(&i, &b, 0.5).unwrap();
        assert!(mid.approx_eq(&spd2(e, 0.0, 1.0)));
    }

    #[test]
    fn endpoints_are_exact() {
        let a = spd2(2.0, 0.3, 1.0);
        let b = spd2(0.5, -0.1, 3.0);
        assert_eq!(geodesic_point(&a, &b, 0.0).unwrap(), a);
        assert_eq!(geodesic_point(&a, &b, 1.0).unwrap(), b);
        let h = ManifoldKind::Hyperboloid(2);
        let x = Point::new(h, hyperboloid::from_half_plane(0.1, 0.8).to_vec()).unwrap();
        let y = Point::new(h, hyperboloid::from_half_plane(-0.7, 1.3).to_vec()).unwrap();
        assert_eq!(geodesic_point(&x, &y, 0.0).unwrap(), x);
        assert_eq!(geodesic_point(&x, &y, 1.0).unwrap(), y);
    }

    #[test]
    fn log_of_self_is_zero_and_euclidean_log_is_difference() {
        let a = spd2(2.0, 0.3, 1.0);
        assert!(log_map(&a, &a).unwrap().coords().iter().all(|v| *v == 0.0));
        let e = ManifoldKind::Euclidean(3);
        let p = Point::new(e, vec![1.0, 2.0, 3.0]).unwrap();
        let q = Point::new(e, vec![0.5, 2.5, -1.0]).unwrap();
        assert_eq!(log_map(&p, &q).unwrap().coords(), &[-0.5, 0.5, -4.0]);
    }

    #[test]
    fn pair_mean_special_cases() {
        let e = ManifoldKind::Euclidean(2);
        let a = Point::new(e, vec![1.0, 0.0]).unwrap();
        let b = Point::new(e, vec![0.0, 4.0]).unwrap();
        assert_eq!(weighted_pair_mean(&a, &b, 1.0, 0.0).unwrap(), a);
        let m = weighted_pair_mean(&a, &b, 3.0, 1.0).unwrap();
        assert!((m.coords()[0] - 0.75).abs() < 1e-15 && (m.coords()[1] - 1.0).abs() < 1e-15);
        assert!(matches!(
            weighted_pair_mean(&a, &b, 0.0, 0.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let a = Point::new(ManifoldKind::Euclidean(3), vec![0.0; 3]).unwrap();
        let b = spd2(1.0, 0.0, 1.0);
        assert!(matches!(distance(&a, &b), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn invalid_points_are_rejected() {
        assert!(Point::new(ManifoldKind::Spd(2), vec![1.0, 2.0, 1.0]).is_err());
        assert!(Point::new(ManifoldKind::Hyperboloid(2), vec![1.0, 0.5, 0.0]).is_err());
        assert!(Point::new(ManifoldKind::Hyperboloid(2), vec![-1.0, 0.0, 0.0]).is_err());
        assert!(Point::new(ManifoldKind::Spd(4), vec![0.0; 10]).is_err());
    }

    #[test]
    fn quadruple_of_equal_points_has_zero_residual() {
        let x = spd2(2.0, 0.3, 1.0);
        assert!(check_cat0(&x, &x, &x, &x).unwrap().abs() < 1e-12);
        let y = spd2(1.0, -0.2, 4.0);
        assert!(check_joint_convexity(&x, &y, &x, &y, 0.3).unwrap().abs() < 1e-12);
        let r = check_joint_convexity(&x, &y, &y, &x, 0.0).unwrap();
        assert!(r.abs() < 1e-15);
    }
}
