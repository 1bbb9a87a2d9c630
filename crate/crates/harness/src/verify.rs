//! Invariant suites behind `metamorph verify`.

use std::f64::consts::PI;

use metamorph_core::energy::{
    density_gradient, density_w, pair_energy, pair_energy_gradient, quadratic_form, DensityParams,
    EnergyParams,
};
use metamorph_core::extension::{verify_admissibility, ExtensionBundle};
use metamorph_core::field::{Deformation, GridSpec, ManifoldImage};
use metamorph_core::manifold::{check_cat0, check_joint_convexity, distance, geodesic_point};
use metamorph_core::pathsolver::{discrete_geodesic, SolverConfig};
use metamorph_core::{ManifoldKind, Point};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::mvf;

pub const SUITES: [&str; 5] = ["manifold", "density", "gradient", "extension", "mvf"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `value ≤ limit` when true, `value ≥ limit` otherwise.
    pub upper: bool,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            upper: true,
            pass: value <= limit,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            upper: false,
            pass: value >= limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub samples: usize,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn report(suite: &str, samples: usize, checks: Vec<Check>) -> SuiteReport {
    let pass = checks.iter().all(|c| c.pass);
    SuiteReport {
        suite: suite.to_string(),
        samples,
        checks,
        pass,
    }
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// `exp` at the base point of a Gaussian tangent with coordinate scale `s`.
pub fn random_point(kind: ManifoldKind, r: &mut ChaCha8Rng, s: f64) -> Point {
    let base = kind.base_point();
    let mut v: Vec<f64> = (0..base.len()).map(|_| s * normal(r)).collect();
    if let ManifoldKind::Hyperboloid(_) = kind {
        v[0] = 0.0;
    }
    let mut out = vec![0.0; base.len()];
    kind.exp_into(&base, &v, &mut out);
    Point::new(kind, out).expect("exp stays on the manifold")
}

pub fn run(suite: &str, samples: usize, seed: u64) -> Result<SuiteReport> {
    match suite {
        "manifold" => manifold_suite(samples, seed),
        "density" => density_suite(samples, seed),
        "gradient" => gradient_suite(samples.min(50), seed),
        "extension" => extension_suite(samples, seed),
        "mvf" => mvf_suite(samples.min(100), seed),
        other => Err(HarnessError::Validation(format!(
            "unknown suite '{other}', expected one of {SUITES:?}"
        ))),
    }
}

pub fn manifold_suite(samples: usize, seed: u64) -> Result<SuiteReport> {
    let kinds = [
        ManifoldKind::Spd(2),
        ManifoldKind::Spd(3),
        ManifoldKind::Hyperboloid(2),
        ManifoldKind::Euclidean(3),
    ];
    let mut checks = Vec::new();
    for kind in kinds {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (mut sym, mut tri, mut affine, mut cat0, mut conv, mut roundtrip) =
            (0.0f64, f64::INFINITY, 0.0f64, f64::INFINITY, f64::INFINITY, 0.0f64);
        for _ in 0..samples {
            let p: Vec<Point> = (0..4).map(|_| random_point(kind, &mut r, 0.7)).collect();
            let d = |a: &Point, b: &Point| distance(a, b).expect("same kind");
            let dab = d(&p[0], &p[1]);
            sym = sym.max((dab - d(&p[1], &p[0])).abs());
            tri = tri.min(d(&p[0], &p[2]) + d(&p[2], &p[1]) - dab);
            let (s, t): (f64, f64) = (r.random(), r.random());
            let gs = geodesic_point(&p[0], &p[1], s)?;
            let gt = geodesic_point(&p[0], &p[1], t)?;
            affine = affine.max((d(&gs, &gt) - (t - s).abs() * dab).abs() / dab.max(1.0));
            cat0 = cat0.min(check_cat0(&p[0], &p[1], &p[2], &p[3])?);
            conv = conv.min(check_joint_convexity(&p[0], &p[1], &p[2], &p[3], t)?);
            let mut v = vec![0.0; p[0].coords().len()];
            kind.log_into(p[0].coords(), p[1].coords(), &mut v);
            let mut back = vec![0.0; v.len()];
            kind.exp_into(p[0].coords(), &v, &mut back);
            let err = back
                .iter()
                .zip(p[1].coords())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            roundtrip = roundtrip.max(err / p[1].coords().iter().fold(1.0f64, |m, x| m.max(x.abs())));
        }
        checks.push(Check::at_most(format!("{kind} symmetry"), sym, 1e-9));
        checks.push(Check::at_least(format!("{kind} triangle"), tri, -1e-9));
        checks.push(Check::at_most(format!("{kind} geodesic affinity"), affine, 1e-9));
        checks.push(Check::at_least(format!("{kind} cat0"), cat0, -1e-9));
        checks.push(Check::at_least(format!("{kind} joint convexity"), conv, -1e-9));
        checks.push(Check::at_most(format!("{kind} exp/log roundtrip"), roundtrip, 1e-9));
    }
    Ok(report("manifold", samples, checks))
}

pub fn density_suite(samples: usize, seed: u64) -> Result<SuiteReport> {
    let p = DensityParams::default();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for n in [2usize, 3] {
        let id = DMatrix::<f64>::identity(n, n);
        checks.push(Check::at_most(format!("W(1) n={n}"), density_w(&id, &p)?.abs(), 0.0));
        checks.push(Check::at_most(
            format!("|DW(1)| n={n}"),
            density_gradient(&id, &p)?.norm(),
            1e-12,
        ));
        let mut hess = 0.0f64;
        for _ in 0..100 {
            let b = DMatrix::from_fn(n, n, |_, _| normal(&mut r));
            let h = 1e-4;
            let w = |s: f64| density_w(&(&id + &b * s), &p).expect("near identity");
            let fd = (w(h) - 2.0 * w(0.0) + w(-h)) / (h * h);
            let exact = 2.0 * quadratic_form(&b, &p);
            hess = hess.max((fd - exact).abs() / exact.abs().max(1e-12));
        }
        checks.push(Check::at_most(format!("Hessian at 1 n={n}"), hess, 1e-6));
    }
    // coercivity constants of the default density
    let (c1, c2, radius) = (0.25 * p.mu, 1e-3, 1.0);
    let (mut near, mut far) = (f64::INFINITY, f64::INFINITY);
    for i in 0..samples {
        let n = 2 + i % 2;
        let id = DMatrix::<f64>::identity(n, n);
        let s = DMatrix::from_fn(n, n, |_, _| [0.05, 0.3, 1.0][i % 3] * normal(&mut r));
        let a = if i % 4 == 0 {
            &id + (&s - s.transpose()) * 0.5
        } else {
            &id + s
        };
        if a.determinant() <= 0.0 {
            continue;
        }
        let w = density_w(&a, &p)?;
        if (&a - &id).norm() < radius {
            let sym = (&a + a.transpose()) * 0.5 - &id;
            near = near.min(w - c1 * sym.norm_squared());
        } else {
            far = far.min(w - c2);
        }
    }
    checks.push(Check::at_least("growth near identity", near, 0.0));
    checks.push(Check::at_least("growth away from identity", far, 0.0));
    Ok(report("density", samples, checks))
}

fn random_spd_image(r: &mut ChaCha8Rng, n: usize) -> Result<ManifoldImage> {
    let g = GridSpec::square(n)?;
    let kind = ManifoldKind::Spd(2);
    let vals: Vec<f64> = (0..g.len())
        .flat_map(|_| random_point(kind, r, 0.5).into_coords())
        .collect();
    Ok(ManifoldImage::new(g, kind, vals)?)
}

fn smooth_deformation(r: &mut ChaCha8Rng, n: usize, amp: f64) -> Result<Deformation> {
    let c: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
    Ok(Deformation::from_fn(GridSpec::square(n)?, 0.05, move |x| {
        let b = (PI * x[0]).sin() * (PI * x[1]).sin();
        vec![
            amp * b * (c[0] + c[1] * (2.0 * PI * x[1]).cos()),
            amp * b * (c[2] + c[3] * (2.0 * PI * x[0]).sin()),
        ]
    })?)
}

/// Central differences of `R` against its gradient at random interior nodes.
pub fn gradient_suite(nodes: usize, seed: u64) -> Result<SuiteReport> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let a = random_spd_image(&mut r, 8)?;
    let b = random_spd_image(&mut r, 8)?;
    let phi = smooth_deformation(&mut r, 8, 0.04)?;
    let params = EnergyParams::default();
    let (_, grad) = pair_energy_gradient(&a, &b, &phi, &params)?;
    let scale = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g = phi.grid().clone();
    let interior: Vec<usize> = (0..g.len()).filter(|&i| !g.is_boundary(i)).collect();
    let h = 1e-5 * g.spacing(0);
    let mut worst = 0.0f64;
    for _ in 0..nodes {
        let node = interior[r.random_range(0..interior.len())];
        for c in 0..2 {
            let eval = |s: f64| -> Result<f64> {
                let mut u = phi.displacement().to_vec();
                u[node * 2 + c] += s;
                let d = Deformation::new(g.clone(), u, phi.epsilon())?;
                Ok(pair_energy(&a, &b, &d, &params)?.total)
            };
            let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
            let an = grad[node * 2 + c];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3 * scale));
        }
    }
    Ok(report(
        "gradient",
        nodes,
        vec![Check::at_most("relative gradient error", worst, 2e-4)],
    ))
}

/// Admissibility of the extension of a small solved SPD(2) path.
pub fn extension_suite(samples: usize, seed: u64) -> Result<SuiteReport> {
    let a = crate::synth::spd_blob(&GridSpec::square(8)?, [0.4, 0.5])?;
    let b = crate::synth::spd_blob(&GridSpec::square(8)?, [0.6, 0.5])?;
    let mut params = EnergyParams::default();
    params.coupling.delta = 0.05;
    params.coupling.epsilon = 0.05;
    let config = SolverConfig {
        levels: 1,
        max_outer: 10,
        ..SolverConfig::default()
    };
    let run = discrete_geodesic(&a, &b, 2, &params, &config)?;
    let bundle = ExtensionBundle::new(&run.path, 16)?;
    let adm = verify_admissibility(&bundle, samples.min(1000), seed, 1e-4)?;
    Ok(report(
        "extension",
        adm.samples,
        vec![
            Check::at_most("admissibility violation", adm.max_violation, 1e-4),
            Check::at_most("within-step deviation", adm.within_step_deviation, 1e-6),
        ],
    ))
}

pub fn mvf_suite(samples: usize, seed: u64) -> Result<SuiteReport> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (mut mismatched, mut accepted_truncation) = (0usize, 0usize);
    for i in 0..samples {
        let img = random_spd_image(&mut r, 3 + i % 4)?;
        let bytes = mvf::image_to_bytes(&img)?;
        let back = mvf::image_from_bytes(&bytes)?;
        let same = back
            .values()
            .iter()
            .zip(img.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same || mvf::image_to_bytes(&back)? != bytes {
            mismatched += 1;
        }
        let cut = r.random_range(1..bytes.len());
        if mvf::image_from_bytes(&bytes[..cut]).is_ok() {
            accepted_truncation += 1;
        }
    }
    Ok(report(
        "mvf",
        samples,
        vec![
            Check::at_most("roundtrip mismatches", mismatched as f64, 0.0),
            Check::at_most("truncated files accepted", accepted_truncation as f64, 0.0),
        ],
    ))
}
