mod common;

use common::*;
use metamorph_core::manifold::*;
use metamorph_core::{ManifoldKind, Point};
use nalgebra::{Matrix2, Matrix3};
use proptest::prelude::*;

const KINDS: [ManifoldKind; 5] = [
    ManifoldKind::Euclidean(3),
    ManifoldKind::Spd(2),
    ManifoldKind::Spd(3),
    ManifoldKind::Hyperboloid(2),
    ManifoldKind::Hyperboloid(3),
];

/// Tangent scale 0.7 at the base point keeps hyperboloid coordinates of
/// order 10, where the ambient model still resolves 1e-9.
fn point(kind: ManifoldKind, seed: u64, s: f64) -> Point {
    Point::new(kind, random_point(kind, &mut rng(seed), s)).unwrap()
}

fn kind_strategy() -> impl Strategy<Value = ManifoldKind> {
    (0..KINDS.len()).prop_map(|i| KINDS[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn metric_axioms(kind in kind_strategy(), seed in any::<u64>()) {
        let (a, b, c) = (point(kind, seed, 0.7), point(kind, seed ^ 1, 0.7), point(kind, seed ^ 2, 0.7));
        let dab = distance(&a, &b).unwrap();
        prop_assert!(dab >= 0.0);
        prop_assert!(distance(&a, &a).unwrap() == 0.0);
        prop_assert!((dab - distance(&b, &a).unwrap()).abs() <= 1e-9 * dab.max(1.0));
        let tri = distance(&a, &c).unwrap() + distance(&c, &b).unwrap() - dab;
        prop_assert!(tri >= -1e-9);
    }

    #[test]
    fn geodesics_are_constant_speed(kind in kind_strategy(), seed in any::<u64>(), s in 0.0..1.0f64, t in 0.0..1.0f64) {
        let (a, b) = (point(kind, seed, 0.7), point(kind, seed ^ 7, 0.7));
        let d = distance(&a, &b).unwrap();
        let gs = geodesic_point(&a, &b, s).unwrap();
        let gt = geodesic_point(&a, &b, t).unwrap();
        prop_assert!((distance(&gs, &gt).unwrap() - (s - t).abs() * d).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn exp_inverts_log(kind in kind_strategy(), seed in any::<u64>()) {
        let (a, b) = (point(kind, seed, 0.7), point(kind, seed ^ 3, 0.7));
        let v = log_map(&a, &b).unwrap();
        prop_assert!((v.norm() - distance(&a, &b).unwrap()).abs() <= 1e-9);
        let back = exp_map(&a, &v).unwrap();
        prop_assert!(distance(&back, &b).unwrap() <= 1e-9);
    }

    #[test]
    fn nonpositive_curvature(kind in kind_strategy(), seed in any::<u64>(), t in 0.0..1.0f64) {
        let p: Vec<Point> = (0..4).map(|i| point(kind, seed.wrapping_add(i), 0.7)).collect();
        prop_assert!(check_cat0(&p[0], &p[1], &p[2], &p[3]).unwrap() >= -1e-9);
        prop_assert!(check_joint_convexity(&p[0], &p[1], &p[2], &p[3], t).unwrap() >= -1e-9);
    }

    #[test]
    fn pair_mean_lies_at_weight_ratio(kind in kind_strategy(), seed in any::<u64>(), wa in 0.01..5.0f64, wb in 0.01..5.0f64) {
        let (a, b) = (point(kind, seed, 0.7), point(kind, seed ^ 9, 0.7));
        let m = weighted_pair_mean(&a, &b, wa, wb).unwrap();
        let g = geodesic_point(&a, &b, wb / (wa + wb)).unwrap();
        prop_assert!(distance(&m, &g).unwrap() <= 1e-9);
        // first-order optimality against nearby geodesic points
        let f = |q: &Point| wa * distance(&a, q).unwrap().powi(2) + wb * distance(&b, q).unwrap().powi(2);
        for dt in [-1e-3, 1e-3] {
            let q = geodesic_point(&a, &b, (wb / (wa + wb) + dt).clamp(0.0, 0.7)).unwrap();
            prop_assert!(f(&q) >= f(&m) - 1e-12);
        }
    }
}

#[test]
fn commuting_spd_distance_is_log_eigen_ratio() {
    let mut r = rng(4);
    for _ in 0..100 {
        let th: f64 = normal(&mut r);
        let q = Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos());
        let la = [normal(&mut r).exp(), normal(&mut r).exp()];
        let lb = [normal(&mut r).exp(), normal(&mut r).exp()];
        let m = |l: [f64; 2]| {
            let s = q * Matrix2::from_diagonal(&l.into()) * q.transpose();
            Point::new(ManifoldKind::Spd(2), vec![s[(0, 0)], s[(0, 1)], s[(1, 1)]]).unwrap()
        };
        let want = ((la[0] / lb[0]).ln().powi(2) + (la[1] / lb[1]).ln().powi(2)).sqrt();
        assert!((distance(&m(la), &m(lb)).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn spd_distance_is_congruence_invariant() {
    let mut r = rng(5);
    let kind = ManifoldKind::Spd(3);
    for _ in 0..100 {
        let a = random_point(kind, &mut r, 0.8);
        let b = random_point(kind, &mut r, 0.8);
        let g = Matrix3::from_fn(|_, _| normal(&mut r)) + Matrix3::identity() * 3.0;
        let conj = |p: &[f64]| {
            let m = Matrix3::new(p[0], p[1], p[2], p[1], p[3], p[4], p[2], p[4], p[5]);
            let c = g * m * g.transpose();
            Point::new(kind, vec![c[(0, 0)], c[(0, 1)], c[(0, 2)], c[(1, 1)], c[(1, 2)], c[(2, 2)]]).unwrap()
        };
        let pa = Point::new(kind, a.clone()).unwrap();
        let pb = Point::new(kind, b.clone()).unwrap();
        let d = distance(&pa, &pb).unwrap();
        assert!((distance(&conj(&a), &conj(&b)).unwrap() - d).abs() < 1e-8 * d.max(1.0));
    }
}

#[test]
fn gaussian_fisher_rao_distance_for_equal_means() {
    // for equal means the Fisher-Rao distance is sqrt(2)|ln(s1/s2)|
    let (s1, s2) = (0.4, 2.3);
    let a = Point::new(ManifoldKind::Hyperboloid(2), hyperboloid::from_gaussian(1.5, s1).to_vec()).unwrap();
    let b = Point::new(ManifoldKind::Hyperboloid(2), hyperboloid::from_gaussian(1.5, s2).to_vec()).unwrap();
    let d = distance(&a, &b).unwrap() * std::f64::consts::SQRT_2;
    assert!((d - std::f64::consts::SQRT_2 * (s2 / s1).ln()).abs() < 1e-12);
    let (m, s) = hyperboloid::to_gaussian(a.coords());
    assert!((m - 1.5).abs() < 1e-12 && (s - s1).abs() < 1e-12);
}

#[test]
fn euclidean_operations_are_affine() {
    let kind = ManifoldKind::Euclidean(3);
    let a = Point::new(kind, vec![1.0, -2.0, 0.5]).unwrap();
    let b = Point::new(kind, vec![-1.0, 2.0, 4.5]).unwrap();
    assert_eq!(geodesic_point(&a, &b, 0.25).unwrap().coords(), &[0.5, -1.0, 1.5]);
    assert_eq!(distance(&a, &b).unwrap(), 6.0);
    assert_eq!(log_map(&a, &b).unwrap().coords(), &[-2.0, 4.0, 4.0]);
}

#[test]
fn geodesic_velocity_matches_finite_differences() {
    let mut r = rng(8);
    for kind in KINDS {
        for _ in 0..20 {
            let a = random_point(kind, &mut r, 0.7);
            let b = random_point(kind, &mut r, 0.7);
            let t = 0.3;
            let mut v = vec![0.0; a.len()];
            kind.geodesic_velocity_into(&a, &b, t, &mut v);
            let h = 1e-6;
            let p = kind.geodesic(&a, &b, t + h);
            let m = kind.geodesic(&a, &b, t - h);
            for i in 0..a.len() {
                let fd = (p[i] - m[i]) / (2.0 * h);
                assert!((fd - v[i]).abs() < 1e-6 * (1.0 + v[i].abs()), "{kind}: {fd} vs {}", v[i]);
            }
        }
    }
}

#[test]
fn geodesic_differential_matches_finite_differences() {
    let mut r = rng(9);
    for kind in KINDS {
        for _ in 0..20 {
            let a = random_point(kind, &mut r, 0.7);
            let b = random_point(kind, &mut r, 0.7);
            let da = log_tangent(kind, &a, &mut r);
            let db = log_tangent(kind, &b, &mut r);
            let t = 0.6;
            let mut out = vec![0.0; a.len()];
            kind.geodesic_differential_into(&a, &b, t, &da, &db, &mut out);
            let h = 1e-6;
            let shift = |p: &[f64], v: &[f64], s: f64| {
                let mut q = vec![0.0; p.len()];
                kind.exp_into(p, &v.iter().map(|c| c * s).collect::<Vec<_>>(), &mut q);
                q
            };
            let gp = kind.geodesic(&shift(&a, &da, h), &shift(&b, &db, h), t);
            let gm = kind.geodesic(&shift(&a, &da, -h), &shift(&b, &db, -h), t);
            for i in 0..a.len() {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((fd - out[i]).abs() < 1e-5 * (1.0 + out[i].abs()), "{kind}: {fd} vs {}", out[i]);
            }
        }
    }
}

/// Tangent at `p` pointing to a random nearby point.
fn log_tangent(kind: ManifoldKind, p: &[f64], r: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let q = random_point(kind, r, 0.5);
    let mut v = vec![0.0; p.len()];
    kind.log_into(p, &q, &mut v);
    v
}

