//! Affine-invariant geometry on symmetric positive definite matrices.
//!
//! Points and tangents are packed as the upper triangle in row-major order
//! (`a00, a01, .., a0n, a11, ..`). Matrix functions go through a symmetric
//! eigendecomposition with eigenvalues clamped at [`EIG_FLOOR`].

use nalgebra::{DMatrix, SMatrix, SVector, SymmetricEigen};

pub const EIG_FLOOR: f64 = 1e-14;
const COINCIDENT: f64 = 1e-12;

type Mat<const N: usize> = SMatrix<f64, N, N>;

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn unpack<const N: usize>(p: &[f64]) -> Mat<N> {
    let mut m = Mat::<N>::zeros();
    let mut idx = 0;
    for i in 0..N {
        for j in i..N {
            m[(i, j)] = p[idx];
            m[(j, i)] = p[idx];
            idx += 1;
        }
    }
    m
}

pub fn pack<const N: usize>(m: &Mat<N>, out: &mut [f64]) {
    let mut idx = 0;
    for i in 0..N {
        for j in i..N {
            out[idx] = 0.5 * (m[(i, j)] + m[(j, i)]);
            idx += 1;
        }
    }
}

struct Eig<const N: usize> {
    values: SVector<f64, N>,
    vectors: Mat<N>,
}

impl<const N: usize> Eig<N> {
    fn new(m: Mat<N>) -> Self {
        let sym = (m + m.transpose()) * 0.5;
        match N {
            2 => {
                let (values, vectors) = eig2(sym[(0, 0)], sym[(0, 1)], sym[(1, 1)]);
                Self {
                    values: SVector::from_column_slice(&values),
                    vectors: Mat::from_column_slice(&vectors),
                }
            }
            3 => {
                let e = SymmetricEigen::new(nalgebra::Matrix3::from_column_slice(sym.as_slice()));
                Self {
                    values: SVector::from_column_slice(e.eigenvalues.as_slice()),
                    vectors: Mat::from_column_slice(e.eigenvectors.as_slice()),
                }
            }
            _ => {
                let e = SymmetricEigen::new(DMatrix::from_column_slice(N, N, sym.as_slice()));
                Self {
                    values: SVector::from_column_slice(e.eigenvalues.as_slice()),
                    vectors: Mat::from_column_slice(e.eigenvectors.as_slice()),
                }
            }
        }
    }

    fn apply(&self, f: impl Fn(f64) -> f64) -> Mat<N> {
        let mut scaled = self.vectors;
        for j in 0..N {
            let fj = f(self.values[j].max(EIG_FLOOR));
            for i in 0..N {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * self.vectors.transpose()
    }

    /// Fréchet derivative of the matrix function `f` in direction `e`
    /// (Daleckii–Krein divided differences).
    fn frechet(&self, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, e: &Mat<N>) -> Mat<N> {
        let q = &self.vectors;
        let mut inner = q.transpose() * e * q;
        for i in 0..N {
            for j in 0..N {
                let li = self.values[i].max(EIG_FLOOR);
                let lj = self.values[j].max(EIG_FLOOR);
                let gap = li - lj;
                let coef = if gap.abs() <= 1e-9 * li.max(lj) {
                    df(0.5 * (li + lj))
                } else {
                    (f(li) - f(lj)) / gap
                };
                inner[(i, j)] *= coef;
            }
        }
        q * inner * q.transpose()
    }
}

/// Closed-form eigensystem of `[[a, b], [b, c]]`; eigenvectors column-major.
fn eig2(a: f64, b: f64, c: f64) -> ([f64; 2], [f64; 4]) {
    let mean = 0.5 * (a + c);
    let half = 0.5 * (a - c);
    let r = half.hypot(b);
    // the larger-magnitude root first, the other from the determinant
    let big = if mean >= 0.0 { mean + r } else { mean - r };
    let det = a * c - b * b;
    let small = if big != 0.0 { det / big } else { 0.0 };
    let theta = 0.5 * b.atan2(half);
    let (sn, cs) = theta.sin_cos();
    // (cs, sn) belongs to mean + r
    let (hi, lo) = if mean >= 0.0 { (big, small) } else { (small, big) };
    ([lo, hi], [-sn, cs, cs, sn])
}

struct Roots<const N: usize> {
    sqrt: Mat<N>,
    inv_sqrt: Mat<N>,
    eig: Eig<N>,
}

impl<const N: usize> Roots<N> {
    fn new(a: Mat<N>) -> Self {
        let eig = Eig::new(a);
        Self {
            sqrt: eig.apply(f64::sqrt),
            inv_sqrt: eig.apply(|l| 1.0 / l.sqrt()),
            eig,
        }
    }
}

fn congruence<const N: usize>(s: &Mat<N>, m: &Mat<N>) -> Mat<N> {
    s * m * s
}

pub fn is_positive_definite<const N: usize>(p: &[f64]) -> bool {
    let m = unpack::<N>(p);
    m.iter().all(|v| v.is_finite()) && nalgebra::Cholesky::new(m).is_some()
}

pub fn distance<const N: usize>(a: &[f64], b: &[f64]) -> f64 {
    let ra = Roots::new(unpack::<N>(a));
    let m = congruence(&ra.inv_sqrt, &unpack::<N>(b));
    let e = Eig::new(m);
    e.values
        .iter()
        .map(|l| l.max(EIG_FLOOR).ln().powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn geodesic<const N: usize>(a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
    if t == 0.0 {
        out.copy_from_slice(a);
        return;
    }
    if t == 1.0 {
        out.copy_from_slice(b);
        return;
    }
    let ra = Roots::new(unpack::<N>(a));
    let e = Eig::new(congruence(&ra.inv_sqrt, &unpack::<N>(b)));
    let d2: f64 = e.values.iter().map(|l| l.max(EIG_FLOOR).ln().powi(2)).sum();
    if d2.sqrt() < COINCIDENT {
        out.copy_from_slice(a);
        return;
    }
    let mt = e.apply(|l| l.powf(t));
    pack(&congruence(&ra.sqrt, &mt), out);
}

pub fn log<const N: usize>(a: &[f64], b: &[f64], out: &mut [f64]) {
    let ra = Roots::new(unpack::<N>(a));
    let e = Eig::new(congruence(&ra.inv_sqrt, &unpack::<N>(b)));
    let d2: f64 = e.values.iter().map(|l| l.max(EIG_FLOOR).ln().powi(2)).sum();
    if d2.sqrt() < COINCIDENT {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let lm = e.apply(f64::ln);
    pack(&congruence(&ra.sqrt, &lm), out);
}

pub fn exp<const N: usize>(a: &[f64], v: &[f64], out: &mut [f64]) {
    let ra = Roots::new(unpack::<N>(a));
    let w = congruence(&ra.inv_sqrt, &unpack::<N>(v));
    let ew = Eig::new(w);
    // exp of a symmetric matrix: eigenvalues may be negative, so no floor
    let mut scaled = ew.vectors;
    for j in 0..N {
        let fj = ew.values[j].exp();
        for i in 0..N {
            scaled[(i, j)] *= fj;
        }
    }
    let expw = scaled * ew.vectors.transpose();
    pack(&congruence(&ra.sqrt, &expw), out);
}

pub fn inner<const N: usize>(base: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let ra = Roots::new(unpack::<N>(base));
    let inv = ra.inv_sqrt * ra.inv_sqrt;
    (inv * unpack::<N>(u) * inv * unpack::<N>(v)).trace()
}

/// Velocity `d/dt γ_{a,b}(t)`.
pub fn geodesic_velocity<const N: usize>(a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
    let ra = Roots::new(unpack::<N>(a));
    let e = Eig::new(congruence(&ra.inv_sqrt, &unpack::<N>(b)));
    let d2: f64 = e.values.iter().map(|l| l.max(EIG_FLOOR).ln().powi(2)).sum();
    if d2.sqrt() < COINCIDENT {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let vel = e.apply(|l| l.powf(t) * l.ln());
    pack(&congruence(&ra.sqrt, &vel), out);
}

/// Differential of `(a, b) ↦ γ_{a,b}(t)` applied to `(da, db)`.
pub fn geodesic_differential<const N: usize>(
    a: &[f64],
    b: &[f64],
    t: f64,
    da: &[f64],
    db: &[f64],
    out: &mut [f64],
) {
    let am = unpack::<N>(a);
    let bm = unpack::<N>(b);
    let dam = unpack::<N>(da);
    let dbm = unpack::<N>(db);
    let ra = Roots::new(am);
    let s = ra.sqrt;
    let si = ra.inv_sqrt;
    let ds = ra.eig.frechet(f64::sqrt, |l| 0.5 / l.sqrt(), &dam);
    let dsi = -(si * ds * si);
    let m = congruence(&si, &bm);
    let dm = dsi * bm * si + si * dbm * si + si * bm * dsi;
    let em = Eig::new(m);
    let mt = em.apply(|l| l.powf(t));
    let dmt = em.frechet(|l| l.powf(t), |l| t * l.powf(t - 1.0), &dm);
    let dq = ds * mt * s + s * dmt * s + s * mt * ds;
    pack(&dq, out);
}
