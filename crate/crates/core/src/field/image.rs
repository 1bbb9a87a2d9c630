use rayon::prelude::*;

use super::grid::{locate, to_index_space, GridSpec};
use super::Deformation;
use crate::error::{Error, Result};
use crate::manifold::{ManifoldKind, Point};
use crate::sum::pairwise_sum;

/// A manifold-valued image: one point payload per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldImage {
    grid: GridSpec,
    kind: ManifoldKind,
    values: Vec<f64>,
}

impl ManifoldImage {
    pub fn new(grid: GridSpec, kind: ManifoldKind, values: Vec<f64>) -> Result<Self> {
        kind.check()?;
        let d = kind.payload_dim();
        if values.len() != grid.len() * d {
            return Err(Error::GridMismatch(format!(
                "payload of {} reals for {} nodes of dimension {d}",
                values.len(),
                grid.len()
            )));
        }
        for chunk in values.chunks_exact(d) {
            kind.validate(chunk)?;
        }
        Ok(Self { grid, kind, values })
    }

    pub fn from_fn(
        grid: GridSpec,
        kind: ManifoldKind,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let n = grid.dim();
        let mut values = Vec::with_capacity(grid.len() * kind.payload_dim());
        for i in 0..grid.len() {
            values.extend(f(&grid.position(i)[..n]));
        }
        Self::new(grid, kind, values)
    }

    pub fn constant(grid: GridSpec, point: &Point) -> Self {
        let values = point.coords().repeat(grid.len());
        Self {
            grid,
            kind: point.kind(),
            values,
        }
    }

    /// Builds an image from payloads known to be valid (results of geodesic
    /// operations on valid inputs).
    pub(crate) fn from_trusted(grid: GridSpec, kind: ManifoldKind, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len() * kind.payload_dim());
        Self { grid, kind, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, idx: usize) -> &[f64] {
        let d = self.kind.payload_dim();
        &self.values[idx * d..(idx + 1) * d]
    }

    pub fn point(&self, idx: usize) -> Point {
        Point::new(self.kind, self.value(idx).to_vec()).expect("image payloads are validated")
    }

    pub fn ensure_compatible(&self, other: &ManifoldImage) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.kind != other.kind {
            return Err(Error::KindMismatch {
                left: self.kind,
                right: other.kind,
            });
        }
        Ok(())
    }

    /// Manifold multilinear interpolation at a physical position.
    pub fn sample(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.kind.payload_dim()];
        self.sample_into(p, &mut out)?;
        Ok(out)
    }

    pub fn sample_into(&self, p: &[f64], out: &mut [f64]) -> Result<()> {
        let t = to_index_space(&self.grid, p)?;
        self.interpolate(&t, out, None);
        Ok(())
    }

    /// Interpolated value together with its partial derivatives in each
    /// physical coordinate direction (tangents at the value).
    pub fn sample_with_gradient(&self, p: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let d = self.kind.payload_dim();
        let mut out = vec![0.0; d];
        let mut grad = vec![vec![0.0; d]; self.grid.dim()];
        let t = to_index_space(&self.grid, p)?;
        self.interpolate(&t, &mut out, Some(&mut grad));
        for (a, g) in grad.iter_mut().enumerate() {
            let scale = (self.grid.shape()[a] - 1) as f64;
            g.iter_mut().for_each(|v| *v *= scale);
        }
        Ok((out, grad))
    }

    /// Axis-ordered iterated geodesic averaging (`x₁` first) inside the cell
    /// containing index-space point `t`.
    fn interpolate(&self, t: &[f64; 3], out: &mut [f64], grad: Option<&mut Vec<Vec<f64>>>) {
        let n = self.grid.dim();
        let d = self.kind.payload_dim();
        let shape = self.grid.shape();
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..n {
            let (j, s) = locate(t[a], shape[a]);
            cell[a] = j;
            frac[a] = s;
        }
        let corners = 1usize << n;
        let mut vals = vec![0.0; corners * d];
        for c in 0..corners {
            let mut mi = cell;
            for a in 0..n {
                mi[a] += (c >> a) & 1;
            }
            let idx = self.grid.linear_index(&mi[..n]);
            vals[c * d..(c + 1) * d].copy_from_slice(self.value(idx));
        }
        let want_grad = grad.is_some();
        // dvals[b] holds d/ds_b of every current value
        let mut dvals = vec![vec![0.0; corners * d]; if want_grad { n } else { 0 }];
        let mut count = corners;
        for a in 0..n {
            let half = count / 2;
            let mut next = vec![0.0; half * d];
            let mut dnext = vec![vec![0.0; half * d]; if want_grad { n } else { 0 }];
            for i in 0..half {
                let (lo, hi) = (2 * i * d, (2 * i + 1) * d);
                let pa = &vals[lo..lo + d];
                let pb = &vals[hi..hi + d];
                self.kind
                    .geodesic_into(pa, pb, frac[a], &mut next[i * d..(i + 1) * d]);
                if want_grad {
                    self.kind.geodesic_velocity_into(
                        pa,
                        pb,
                        frac[a],
                        &mut dnext[a][i * d..(i + 1) * d],
                    );
                    for b in 0..a {
                        let (da, db) = (&dvals[b][lo..lo + d], &dvals[b][hi..hi + d]);
                        self.kind.geodesic_differential_into(
                            pa,
                            pb,
                            frac[a],
                            da,
                            db,
                            &mut dnext[b][i * d..(i + 1) * d],
                        );
                    }
                }
            }
            vals = next;
            dvals = dnext;
            count = half;
        }
        out.copy_from_slice(&vals[..d]);
        if let Some(g) = grad {
            for a in 0..n {
                g[a].copy_from_slice(&dvals[a][..d]);
            }
        }
    }
}

/// `I∘φ` sampled at the grid nodes.
pub fn warp(image: &ManifoldImage, phi: &Deformation) -> Result<ManifoldImage> {
    image.grid.ensure_same(phi.grid())?;
    let n = image.grid.dim();
    let d = image.kind.payload_dim();
    let pos = phi.positions();
    let chunks: Result<Vec<Vec<f64>>> = pos
        .par_chunks_exact(n)
        .map(|p| image.sample(p))
        .collect();
    let values: Vec<f64> = chunks?.into_iter().flatten().collect();
    debug_assert_eq!(values.len(), image.grid.len() * d);
    Ok(ManifoldImage::from_trusted(image.grid.clone(), image.kind, values))
}

/// Per-node squared distances between two compatible images.
pub fn pointwise_sq_distances(a: &ManifoldImage, b: &ManifoldImage) -> Result<Vec<f64>> {
    a.ensure_compatible(b)?;
    Ok((0..a.grid.len())
        .into_par_iter()
        .map(|i| a.kind.dist(a.value(i), b.value(i)).powi(2))
        .collect())
}

/// `d₂²(I, J)` with trapezoidal quadrature.
pub fn l2_distance_sq(a: &ManifoldImage, b: &ManifoldImage) -> Result<f64> {
    let d2 = pointwise_sq_distances(a, b)?;
    let terms: Vec<f64> = d2
        .iter()
        .enumerate()
        .map(|(i, v)| a.grid.weight(i) * v)
        .collect();
    Ok(pairwise_sum(&terms))
}

pub fn l2_distance(a: &ManifoldImage, b: &ManifoldImage) -> Result<f64> {
    Ok(l2_distance_sq(a, b)?.sqrt())
}

/// Pointwise geodesic `x ↦ γ_{A(x),B(x)}(t)`.
pub fn pointwise_geodesic(a: &ManifoldImage, b: &ManifoldImage, t: f64) -> Result<ManifoldImage> {
    a.ensure_compatible(b)?;
    let d = a.kind.payload_dim();
    let mut values = vec![0.0; a.values.len()];
    values
        .par_chunks_exact_mut(d)
        .enumerate()
        .for_each(|(i, out)| a.kind.geodesic_into(a.value(i), b.value(i), t, out));
    Ok(ManifoldImage::from_trusted(a.grid.clone(), a.kind, values))
}
