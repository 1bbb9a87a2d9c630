#![allow(dead_code)]

use metamorph_core::field::{Deformation, GridSpec, ManifoldImage};
use metamorph_core::manifold::hyperboloid;
use metamorph_core::ManifoldKind;
use nalgebra::Matrix2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Random SPD(2) payload `exp(S)` with `S` symmetric, entries ~ N(0, s²).
pub fn random_spd2(r: &mut ChaCha8Rng, s: f64) -> Vec<f64> {
    let (a, b, c) = (s * normal(r), s * normal(r), s * normal(r));
    let m = Matrix2::new(a, b, b, c).symmetric_eigen();
    let e = m.eigenvectors * Matrix2::from_diagonal(&m.eigenvalues.map(f64::exp)) * m.eigenvectors.transpose();
    vec![e[(0, 0)], 0.5 * (e[(0, 1)] + e[(1, 0)]), e[(1, 1)]]
}

pub fn random_hyperboloid2(r: &mut ChaCha8Rng) -> Vec<f64> {
    let a = normal(r);
    let b = (0.7 * normal(r)).exp();
    hyperboloid::from_half_plane(a, b).to_vec()
}

pub fn random_spd_image(r: &mut ChaCha8Rng, n: usize) -> ManifoldImage {
    let g = GridSpec::square(n).unwrap();
    let vals: Vec<f64> = (0..g.len()).flat_map(|_| random_spd2(r, 0.5)).collect();
    ManifoldImage::new(g, ManifoldKind::Spd(2), vals).unwrap()
}

/// Smooth random displacement vanishing on the boundary.
pub fn random_smooth_deformation(r: &mut ChaCha8Rng, n: usize, amp: f64) -> Deformation {
    let c: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    Deformation::from_fn(GridSpec::square(n).unwrap(), 0.05, move |x| {
        let b = (PI * x[0]).sin() * (PI * x[1]).sin();
        vec![
            amp * b * (c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * (2.0 * PI * x[1]).cos()),
            amp * b * (c[4] + c[5] * x[1] + c[6] * x[0] + c[7] * (2.0 * PI * x[0]).sin()),
        ]
    })
    .unwrap()
}

/// `exp_o(V)` at the base point with Gaussian tangent coordinates of scale `s`.
pub fn random_point(kind: ManifoldKind, r: &mut ChaCha8Rng, s: f64) -> Vec<f64> {
    let base = kind.base_point();
    let mut v: Vec<f64> = (0..base.len()).map(|_| s * normal(r)).collect();
    if let ManifoldKind::Hyperboloid(_) = kind {
        v[0] = 0.0;
    }
    let mut out = vec![0.0; base.len()];
    kind.exp_into(&base, &v, &mut out);
    out
}
