use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform node grid over the closed unit cube `[0,1]^n`, `n ∈ {2,3}`.
///
/// Nodes are stored row-major with the last axis fastest; axis 0 is `x₁`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    shape: Vec<usize>,
}

impl GridSpec {
    pub fn new(shape: &[usize]) -> Result<Self> {
        if !(2..=3).contains(&shape.len()) {
            return Err(Error::Contract(format!(
                "grid dimension {} not in {{2,3}}",
                shape.len()
            )));
        }
        if let Some(bad) = shape.iter().find(|&&s| s < 3) {
            return Err(Error::Contract(format!("grid axis with {bad} < 3 samples")));
        }
        Ok(Self {
            shape: shape.to_vec(),
        })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(&[n, n])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / (self.shape[axis] - 1) as f64
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    /// Multi-index of a linear node index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.shape[a];
            idx /= self.shape[a];
        }
        out
    }

    pub fn linear_index(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        for a in 0..self.dim() {
            idx = idx * self.shape[a] + mi[a];
        }
        idx
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let mi = self.multi_index(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim() {
            p[a] = mi[a] as f64 * self.spacing(a);
        }
        p
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim()).any(|a| mi[a] == 0 || mi[a] == self.shape[a] - 1)
    }

    /// Trapezoidal quadrature weight of a node; weights sum to one.
    pub fn weight(&self, idx: usize) -> f64 {
        let mi = self.multi_index(idx);
        let mut w = 1.0;
        for a in 0..self.dim() {
            let h = self.spacing(a);
            w *= if mi[a] == 0 || mi[a] == self.shape[a] - 1 {
                0.5 * h
            } else {
                h
            };
        }
        w
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )))
        }
    }
}

/// Derivative stencil along one axis at index `i` of an axis with `n` nodes:
/// central differences in the interior, second-order one-sided at the ends.
/// Offsets are relative node indices along the axis.
pub fn derivative_stencil(i: usize, n: usize, h: f64) -> [(isize, f64); 3] {
    if i == 0 {
        [(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)]
    } else if i == n - 1 {
        [(0, 1.5 / h), (-1, -2.0 / h), (-2, 0.5 / h)]
    } else {
        [(-1, -0.5 / h), (1, 0.5 / h), (0, 0.0)]
    }
}

/// Locates an index-space coordinate in its interpolation cell.
///
/// Returns the lower cell index and the local fraction in `[0,1]`; fractions
/// within `1e-12` of a node snap to it so node lookups are exact.
pub(crate) fn locate(t: f64, n: usize) -> (usize, f64) {
    let j = (t.floor().max(0.0) as usize).min(n - 2);
    let mut s = t - j as f64;
    if s.abs() < 1e-12 {
        s = 0.0;
    } else if (s - 1.0).abs() < 1e-12 {
        s = 1.0;
    }
    (j, s.clamp(0.0, 1.0))
}

/// Converts physical positions to index space, clamping overshoot up to
/// [`DOMAIN_TOL`] and rejecting anything beyond.
pub(crate) fn to_index_space(grid: &GridSpec, p: &[f64]) -> Result<[f64; 3]> {
    let mut t = [0.0; 3];
    for a in 0..grid.dim() {
        let over = (-p[a]).max(p[a] - 1.0);
        if !(over <= DOMAIN_TOL) {
            return Err(Error::OutOfDomain {
                position: p[..grid.dim()].to_vec(),
                overshoot: over,
            });
        }
        t[a] = p[a].clamp(0.0, 1.0) * (grid.shape[a] - 1) as f64;
    }
    Ok(t)
}

/// Floating-point overshoot tolerated at the domain boundary.
pub const DOMAIN_TOL: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        let g = GridSpec::new(&[5, 7]).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        let g3 = GridSpec::new(&[3, 4, 5]).unwrap();
        assert!((g3.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn index_roundtrip() {
        let g = GridSpec::new(&[3, 4, 5]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(i)), i);
        }
        assert_eq!(g.stride(0), 20);
    }

    #[test]
    fn stencils_are_exact_on_quadratics() {
        let n = 6;
        let h = 1.0 / 5.0;
        let f = |x: f64| 3.0 * x * x - x + 2.0;
        for i in 0..n {
            let d: f64 = derivative_stencil(i, n, h)
                .iter()
                .map(|&(o, c)| c * f((i as isize + o) as f64 * h))
                .sum();
            assert!((d - (6.0 * i as f64 * h - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(GridSpec::new(&[2, 5]).is_err());
        assert!(GridSpec::new(&[5]).is_err());
    }
}
