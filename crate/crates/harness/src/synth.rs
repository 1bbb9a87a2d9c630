//! Bundled synthetic scenarios.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use metamorph_core::extension::{
    AnalyticScenario, ExprImage, ExprVelocity, ImageField, RateSource, TransportedImage, ZeroVelocity,
};
use metamorph_core::field::{GridSpec, ManifoldImage};
use metamorph_core::manifold::hyperboloid;
use metamorph_core::ManifoldKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Scalar Gaussian bump translated along `x₁`.
    EuclideanBump,
    /// SPD(2) tensor blob translated along `x₁`.
    SpdBlob,
    /// Field of univariate Gaussians whose mean bump moves along `x₁`.
    HyperboloidGaussian,
    /// Scalar image carried by a smooth swirl, no intensity change.
    Transport,
    /// SPD(2) endpoints blended pointwise, no motion.
    Blending,
}

pub const ALL: [Scenario; 5] = [
    Scenario::EuclideanBump,
    Scenario::SpdBlob,
    Scenario::HyperboloidGaussian,
    Scenario::Transport,
    Scenario::Blending,
];

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::EuclideanBump => "euclidean-bump",
            Scenario::SpdBlob => "spd-blob",
            Scenario::HyperboloidGaussian => "hyperboloid-gaussian",
            Scenario::Transport => "transport",
            Scenario::Blending => "blending",
        }
    }

    /// Data weight the scenario was tuned for.
    pub fn delta(self) -> f64 {
        match self {
            Scenario::EuclideanBump => 0.05,
            Scenario::SpdBlob => 0.1,
            Scenario::HyperboloidGaussian => 0.05,
            Scenario::Transport => 10.0,
            Scenario::Blending => 0.1,
        }
    }

    pub fn endpoints(self, n: usize) -> Result<(ManifoldImage, ManifoldImage)> {
        let grid = GridSpec::square(n)?;
        match self {
            Scenario::EuclideanBump => Ok((
                euclidean_bump(&grid, [0.38, 0.5])?,
                euclidean_bump(&grid, [0.62, 0.5])?,
            )),
            Scenario::SpdBlob => Ok((spd_blob(&grid, [0.4, 0.5])?, spd_blob(&grid, [0.6, 0.5])?)),
            Scenario::HyperboloidGaussian => Ok((
                gaussian_field(&grid, [0.4, 0.5])?,
                gaussian_field(&grid, [0.6, 0.5])?,
            )),
            Scenario::Transport | Scenario::Blending => {
                let sc = self.analytic(n)?;
                Ok((sc.start.sample_grid(&grid)?, sc.end.sample_grid(&grid)?))
            }
        }
    }

    /// Continuous scenario for the recovery experiment.
    pub fn analytic(self, n: usize) -> Result<AnalyticScenario> {
        let grid = GridSpec::square(n)?;
        match self {
            Scenario::Transport => {
                let amp = 0.03;
                let velocity = Arc::new(ExprVelocity::parse(&[
                    &format!("{amp}*(1+0.5*sin(pi*t))*sin(pi*x1)^2*pi*sin(2*pi*x2)"),
                    &format!("-{amp}*(1+0.5*sin(pi*t))*sin(pi*x2)^2*pi*sin(2*pi*x1)"),
                ])?);
                let start: Arc<dyn ImageField> =
                    Arc::new(ExprImage::parse(ManifoldKind::Euclidean(1), &["x1"])?);
                let end = Arc::new(TransportedImage {
                    base: start.clone(),
                    velocity: velocity.clone(),
                    steps: 256,
                });
                Ok(AnalyticScenario {
                    grid,
                    velocity,
                    rate: RateSource::Zero,
                    start,
                    end,
                    flow_steps: 256,
                    samples_per_step: 64,
                    compatibility_tol: 1e-6,
                })
            }
            Scenario::Blending => {
                // every endpoint distance stays above 1/8 so the regular
                // branch of the blending parameter applies up to K = 64
                let kind = ManifoldKind::Spd(2);
                let start = Arc::new(ExprImage::parse(kind, &["0.4*x1", "0.1*x2", "-0.2"])?);
                let end = Arc::new(ExprImage::parse(kind, &["0.8 - 0.4*x2", "0.3*x1", "0.5"])?);
                Ok(AnalyticScenario {
                    grid,
                    velocity: Arc::new(ZeroVelocity(2)),
                    rate: RateSource::EndpointDistance,
                    start,
                    end,
                    flow_steps: 256,
                    samples_per_step: 64,
                    compatibility_tol: 1e-6,
                })
            }
            other => Err(HarnessError::Validation(format!(
                "scenario {other} has no continuous description"
            ))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        ALL.iter()
            .copied()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| HarnessError::Validation(format!("unknown scenario '{s}'")))
    }
}

fn bump(x: &[f64], c: [f64; 2], sigma: f64) -> f64 {
    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    (-r2 / (2.0 * sigma * sigma)).exp()
}

pub fn euclidean_bump(grid: &GridSpec, center: [f64; 2]) -> Result<ManifoldImage> {
    Ok(ManifoldImage::from_fn(grid.clone(), ManifoldKind::Euclidean(1), |x| {
        vec![bump(x, center, 0.12)]
    })?)
}

/// Geodesic from the identity towards a rotated `diag(3, 0.5)`, weighted by
/// a Gaussian profile of width 0.15.
pub fn spd_blob(grid: &GridSpec, center: [f64; 2]) -> Result<ManifoldImage> {
    let k = ManifoldKind::Spd(2);
    let (c, s) = (0.5f64.cos(), 0.5f64.sin());
    let (l1, l2) = (3.0, 0.5);
    let t = [c * c * l1 + s * s * l2, c * s * (l1 - l2), s * s * l1 + c * c * l2];
    let id = [1.0, 0.0, 1.0];
    Ok(ManifoldImage::from_fn(grid.clone(), k, |x| {
        k.geodesic(&id, &t, bump(x, center, 0.15))
    })?)
}

/// `N(1.5·b(x), (1 + 0.5·b(x))²)` with a Gaussian profile `b`.
pub fn gaussian_field(grid: &GridSpec, center: [f64; 2]) -> Result<ManifoldImage> {
    Ok(ManifoldImage::from_fn(grid.clone(), ManifoldKind::Hyperboloid(2), |x| {
        let b = bump(x, center, 0.15);
        hyperboloid::from_gaussian(1.5 * b, 1.0 + 0.5 * b).to_vec()
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for sc in ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert!("nope".parse::<Scenario>().is_err());
    }

    #[test]
    fn blending_endpoints_stay_apart() {
        let (a, b) = Scenario::Blending.endpoints(16).unwrap();
        let k = a.kind();
        let min = (0..a.grid().len())
            .map(|i| k.dist(a.value(i), b.value(i)))
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.125, "{min}");
    }
}
