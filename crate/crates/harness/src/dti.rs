//! Raw diffusion-tensor volumes: little-endian `f64`, six upper-triangular
//! components `(xx, xy, xz, yy, yz, zz)` per voxel, voxels in row-major order.

use std::path::Path;

use metamorph_core::field::{GridSpec, ManifoldImage};
use metamorph_core::ManifoldKind;
use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{HarnessError, Result};
use crate::mvf::read_bytes;

/// Loaded tensor image and the number of voxels whose eigenvalues were clamped.
#[derive(Clone, Debug)]
pub struct DtiImage {
    pub image: ManifoldImage,
    pub repaired: usize,
}

/// Relative eigenvalue floor, as a fraction of the largest eigenvalue in the volume.
pub const CLAMP: f64 = 1e-6;

fn to_matrix(c: &[f64]) -> Matrix3<f64> {
    Matrix3::new(c[0], c[1], c[2], c[1], c[3], c[4], c[2], c[4], c[5])
}

pub fn parse_dti(bytes: &[u8], shape: &[usize], slice2d: bool) -> Result<DtiImage> {
    let grid = GridSpec::new(shape)?;
    let want = grid.len() * 6 * 8;
    if bytes.len() != want {
        return Err(HarnessError::Validation(format!(
            "DTI file has {} bytes, shape {shape:?} needs {want}",
            bytes.len()
        )));
    }
    let raw: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::Validation("DTI file contains non-finite values".into()));
    }
    let eigs: Vec<SymmetricEigen<f64, nalgebra::U3>> = raw
        .chunks_exact(6)
        .map(|c| SymmetricEigen::new(to_matrix(c)))
        .collect();
    let top = eigs
        .iter()
        .map(|e| e.eigenvalues.max())
        .fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Err(HarnessError::Validation("every voxel is degenerate".into()));
    }
    let floor = CLAMP * top;
    let mut repaired = 0;
    let mut values = Vec::with_capacity(grid.len() * if slice2d { 3 } else { 6 });
    for (c, e) in raw.chunks_exact(6).zip(&eigs) {
        let m = if e.eigenvalues.min() <= 0.0 {
            repaired += 1;
            let clamped = e.eigenvalues.map(|l| l.max(floor));
            e.eigenvectors * Matrix3::from_diagonal(&clamped) * e.eigenvectors.transpose()
        } else {
            to_matrix(c)
        };
        if slice2d {
            values.extend_from_slice(&[m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]]);
        } else {
            values.extend_from_slice(&[
                m[(0, 0)],
                0.5 * (m[(0, 1)] + m[(1, 0)]),
                0.5 * (m[(0, 2)] + m[(2, 0)]),
                m[(1, 1)],
                0.5 * (m[(1, 2)] + m[(2, 1)]),
                m[(2, 2)],
            ]);
        }
    }
    let kind = if slice2d {
        ManifoldKind::Spd(2)
    } else {
        ManifoldKind::Spd(3)
    };
    Ok(DtiImage {
        image: ManifoldImage::new(grid, kind, values)?,
        repaired,
    })
}

/// Reads a raw tensor volume; `slice2d` keeps the in-plane 2×2 block.
pub fn load_dti_raw(path: &Path, shape: &[usize], slice2d: bool) -> Result<DtiImage> {
    parse_dti(&read_bytes(path)?, shape, slice2d)
}

/// Encodes packed SPD(3) tensors in the raw layout.
pub fn encode_dti(tensors: &[[f64; 6]]) -> Vec<u8> {
    tensors.iter().flatten().flat_map(|v| v.to_le_bytes()).collect()
}
