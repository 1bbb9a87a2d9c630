use rayon::prelude::*;

use crate::error::Result;
use crate::field::{Deformation, GridSpec, ManifoldImage};

/// Grid sequence from coarsest to `fine`, halving each axis down to five
/// nodes.
pub fn grids(fine: &GridSpec, levels: usize) -> Vec<GridSpec> {
    let mut out = vec![fine.clone()];
    while out.len() < levels {
        let last = out.last().expect("nonempty");
        let shape: Vec<usize> = last.shape().iter().map(|&s| ((s + 1) / 2).max(5)).collect();
        if shape == last.shape() {
            break;
        }
        out.push(GridSpec::new(&shape).expect("coarse shape valid"));
    }
    out.reverse();
    out
}

/// Samples an image at the nodes of another grid.
pub fn restrict(image: &ManifoldImage, grid: &GridSpec) -> Result<ManifoldImage> {
    let n = grid.dim();
    let d = image.kind().payload_dim();
    let values: Result<Vec<Vec<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|i| image.sample(&grid.position(i)[..n]))
        .collect();
    let values: Vec<f64> = values?.into_iter().flatten().collect();
    debug_assert_eq!(values.len(), grid.len() * d);
    Ok(ManifoldImage::from_trusted(grid.clone(), image.kind(), values))
}

/// Interpolates a displacement onto another grid; `None` if the result is
/// not admissible.
pub fn prolong(phi: &Deformation, grid: &GridSpec) -> Option<Deformation> {
    let n = grid.dim();
    let mut disp = Vec::with_capacity(grid.len() * n);
    for i in 0..grid.len() {
        let x = grid.position(i);
        let y = phi.eval(&x[..n]).ok()?;
        for a in 0..n {
            disp.push(if grid.is_boundary(i) { 0.0 } else { y[a] - x[a] });
        }
    }
    let out = Deformation::new(grid.clone(), disp, phi.epsilon()).ok()?;
    out.is_admissible().then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sequence() {
        let g = GridSpec::square(17).unwrap();
        let s: Vec<usize> = grids(&g, 4).iter().map(|g| g.shape()[0]).collect();
        assert_eq!(s, vec![5, 9, 17]);
        assert_eq!(grids(&GridSpec::square(5).unwrap(), 3).len(), 1);
    }
}
