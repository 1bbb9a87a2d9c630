use metamorph_core::energy::*;
use metamorph_core::extension::*;
use metamorph_core::field::{l2_distance_sq, pointwise_geodesic, warp, Deformation, GridSpec, ManifoldImage};
use metamorph_core::pathsolver::*;
use metamorph_core::{Error, ManifoldKind, Point};
use std::f64::consts::PI;
use std::sync::Arc;

fn params(delta: f64) -> EnergyParams {
    EnergyParams {
        density: DensityParams::new(1.0, 1.0).unwrap(),
        reg: RegParams::new(1e-3, 3),
        coupling: CouplingParams { delta, epsilon: 0.05 },
    }
}

fn bump(grid: &GridSpec, amp: f64, sx: f64) -> Deformation {
    Deformation::from_fn(grid.clone(), 0.05, |x| {
        let b = (PI * x[0]).sin().powi(2) * (PI * x[1]).sin().powi(2);
        vec![amp * b * sx, amp * b * (1.0 - x[0])]
    })
    .unwrap()
}

fn euclid_image(grid: &GridSpec, f: impl Fn(&[f64]) -> f64 + Sync) -> ManifoldImage {
    ManifoldImage::from_fn(grid.clone(), ManifoldKind::Euclidean(1), |x| vec![f(x)]).unwrap()
}

/// Small Euclidean path with non-trivial deformations.
fn moving_path() -> DiscretePath {
    let g = GridSpec::square(9).unwrap();
    let images = vec![
        euclid_image(&g, |x| x[0] + 0.3 * x[1]),
        euclid_image(&g, |x| (x[0] * x[1]).sin()),
        euclid_image(&g, |x| 0.5 - x[1] * x[1]),
    ];
    let defs = vec![bump(&g, 0.08, 1.0), bump(&g, -0.05, 0.5)];
    DiscretePath::new(images, defs, &params(0.1)).unwrap()
}

fn bilinear(img: &ManifoldImage, p: &[f64]) -> f64 {
    // independent sampler for scalar images on square grids
    let n = img.grid().shape()[0];
    let h = 1.0 / (n - 1) as f64;
    let (i, j) = (((p[0] / h).floor() as usize).min(n - 2), ((p[1] / h).floor() as usize).min(n - 2));
    let (s, t) = (p[0] / h - i as f64, p[1] / h - j as f64);
    let v = |a: usize, b: usize| img.values()[a * n + b];
    (1.0 - s) * (1.0 - t) * v(i, j) + s * (1.0 - t) * v(i + 1, j) + (1.0 - s) * t * v(i, j + 1) + s * t * v(i + 1, j + 1)
}

#[test]
fn time_grid_locates_steps() {
    let tg = TimeGrid::new(4).unwrap();
    assert_eq!(tg.locate(0.0).unwrap(), (1, 0.0));
    assert_eq!(tg.locate(0.25).unwrap(), (2, 0.0));
    assert_eq!(tg.locate(1.0).unwrap(), (4, 1.0));
    let (k, s) = tg.locate(0.6).unwrap();
    assert_eq!(k, 3);
    assert!((s - 0.4).abs() < 1e-12);
    assert!(tg.locate(1.5).is_err());
}

#[test]
fn transport_map_is_affine_between_identity_and_phi() {
    let g = GridSpec::square(7).unwrap();
    let phi = bump(&g, 0.1, 1.0);
    let ident: Vec<f64> = (0..g.len()).flat_map(|i| g.position(i)[..2].to_vec()).collect();
    assert_eq!(transport_map(&phi, 4, 2, 0.25).unwrap(), ident);
    let end = transport_map(&phi, 4, 2, 0.5).unwrap();
    let pos = phi.positions();
    for (a, b) in end.iter().zip(&pos) {
        assert!((a - b).abs() < 1e-15);
    }
    let mid = transport_map(&phi, 4, 2, 0.375).unwrap();
    for i in 0..ident.len() {
        assert!((mid[i] - 0.5 * (ident[i] + pos[i])).abs() < 1e-15);
    }
    assert!(transport_map(&phi, 4, 2, 0.7).is_err());
}

#[test]
fn extension_reproduces_path_images() {
    let path = moving_path();
    for k in 0..2 {
        let img = image_extension(&path, k as f64 / 2.0).unwrap();
        assert_eq!(img, path.images()[k]);
    }
    // left limit at the step boundary
    let bundle = ExtensionBundle::new(&path, 8).unwrap();
    let g = path.images()[0].grid().clone();
    for i in 0..g.len() {
        let y = g.position(i);
        let left = bundle.image_value(0.5 - 1e-9, &y[..2]).unwrap()[0];
        assert!((left - path.images()[1].value(i)[0]).abs() < 1e-6, "{left}");
    }
}

#[test]
fn constant_path_extends_to_constant_images() {
    let g = GridSpec::square(6).unwrap();
    let p = Point::new(ManifoldKind::Spd(2), vec![2.0, 0.4, 1.0]).unwrap();
    let c = ManifoldImage::constant(g.clone(), &p);
    let path = DiscretePath::new(vec![c.clone(); 4], vec![Deformation::identity(g, 0.05).unwrap(); 3], &params(0.1)).unwrap();
    for t in [0.0, 0.1, 0.5, 0.77, 0.99] {
        assert_eq!(image_extension(&path, t).unwrap(), c);
    }
    let bundle = ExtensionBundle::new(&path, 4).unwrap();
    assert!(bundle.material_derivative_samples().unwrap().iter().flatten().all(|z| *z == 0.0));
    let rep = verify_admissibility(&bundle, 50, 1, 1e-4).unwrap();
    assert_eq!(rep.max_violation, 0.0);
    assert!(rep.pass);
}

#[test]
fn euclidean_identity_path_blends_linearly() {
    let g = GridSpec::square(5).unwrap();
    let a = euclid_image(&g, |x| x[0]);
    let b = euclid_image(&g, |x| 1.0 + x[1] * x[1]);
    let c = euclid_image(&g, |x| -x[0] * x[1]);
    let id = Deformation::identity(g.clone(), 0.05).unwrap();
    let path = DiscretePath::new(vec![a.clone(), b.clone(), c.clone()], vec![id.clone(), id], &params(0.1)).unwrap();
    for (t, lo, hi, s) in [(0.1, &a, &b, 0.2), (0.3, &a, &b, 0.6), (0.8, &b, &c, 0.6)] {
        let img = image_extension(&path, t).unwrap();
        for i in 0..g.len() {
            let want = (1.0 - s) * lo.value(i)[0] + s * hi.value(i)[0];
            assert!((img.value(i)[0] - want).abs() < 1e-14);
        }
    }
    let bundle = ExtensionBundle::new(&path, 2).unwrap();
    for i in 0..g.len() {
        let y = g.position(i);
        let z = bundle.material_derivative(0.3, &y[..2]).unwrap();
        assert!((z - 2.0 * (a.value(i)[0] - b.value(i)[0]).abs()).abs() < 1e-13);
    }
}

#[test]
fn velocities_of_scaled_displacement() {
    let g = GridSpec::square(9).unwrap();
    let u = bump(&g, 0.2, 1.0);
    let k = 4;
    let phi = u.scaled(1.0 / k as f64).unwrap();
    let img = euclid_image(&g, |x| x[0]);
    let path = DiscretePath::new(vec![img; k + 1], vec![phi; k], &params(0.1)).unwrap();
    let (w, v) = velocities(&path, &[0.25, 0.3]).unwrap();
    for wk in &w {
        for (a, b) in wk.iter().zip(u.displacement()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
    // at t_{k-1} the transport is the identity
    for (a, b) in v[0].iter().zip(u.displacement()) {
        assert!((a - b).abs() < 1e-14);
    }
    // inside a step v(t, y(t,x)) = w(x)
    let bundle = ExtensionBundle::new(&path, 4).unwrap();
    for i in 0..g.len() {
        let x = g.position(i);
        let y = bundle.flow(0.3, &x[..2]).unwrap();
        let y0 = bundle.flow(0.25, &x[..2]).unwrap();
        let vv = bundle.velocity(0.3, &y[..2]).unwrap();
        let wexp = bundle.velocity(0.25, &y0[..2]).unwrap();
        for a in 0..2 {
            assert!((vv[a] - wexp[a]).abs() < 1e-9);
        }
    }
    let id = Deformation::identity(g.clone(), 0.05).unwrap();
    let flat = DiscretePath::new(vec![path.images()[0].clone(); 3], vec![id.clone(), id], &params(0.1)).unwrap();
    let (w, v) = velocities(&flat, &[0.0, 0.6]).unwrap();
    assert!(w.iter().chain(v.iter()).flatten().all(|c| *c == 0.0));
}

#[test]
fn flow_composes_steps_and_inverts() {
    let g = GridSpec::square(9).unwrap();
    let phi1 = bump(&g, 0.1, 1.0);
    let id = Deformation::identity(g.clone(), 0.05).unwrap();
    let img = euclid_image(&g, |x| x[1]);
    let path = DiscretePath::new(vec![img; 3], vec![phi1.clone(), id], &params(0.1)).unwrap();
    let bundle = ExtensionBundle::new(&path, 8).unwrap();
    let y0 = bundle.flow_nodes(0.0).unwrap();
    for i in 0..g.len() {
        assert_eq!(&y0[2 * i..2 * i + 2], &g.position(i)[..2]);
    }
    let y1 = bundle.flow_nodes(1.0).unwrap();
    // phi2 = Id, so Y(1) = phi1 at the nodes
    for (a, b) in y1.iter().zip(phi1.positions()) {
        assert!((a - b).abs() < 1e-15);
    }
    let path2 = moving_path();
    let b2 = ExtensionBundle::new(&path2, 8).unwrap();
    let g2 = path2.images()[0].grid().clone();
    let y1 = b2.flow_nodes(1.0).unwrap();
    for i in 0..g2.len() {
        let x = g2.position(i);
        let direct = path2.deformations()[1].eval(&path2.deformations()[0].eval(&x[..2]).unwrap()[..2]).unwrap();
        for a in 0..2 {
            assert!((y1[2 * i + a] - direct[a]).abs() < 1e-12);
        }
        for t in [0.2, 0.5, 0.9] {
            let y = b2.flow(t, &x[..2]).unwrap();
            let back = b2.inverse_flow(t, &y[..2]).unwrap();
            for a in 0..2 {
                assert!((back[a] - x[a]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn ode_residual_is_first_order_in_samples() {
    let path = moving_path();
    let r: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&s| ExtensionBundle::new(&path, s).unwrap().ode_residual().unwrap())
        .collect();
    for w in r.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2.0).abs() < 0.1, "{r:?}");
    }
}

#[test]
fn scalar_rate_matches_vector_material_derivative() {
    let path = moving_path();
    let bundle = ExtensionBundle::new(&path, 8).unwrap();
    let g = path.images()[0].grid().clone();
    let k = 2.0;
    for i in 0..g.len() {
        let x = g.position(i);
        for (t, step) in [(0.1, 0usize), (0.35, 0), (0.6, 1), (0.9, 1)] {
            // the blend along the flow is affine in t within a step
            let p = bundle.flow(step as f64 / k, &x[..2]).unwrap();
            let q = path.deformations()[step].eval(&p[..2]).unwrap();
            let lo = bilinear(&path.images()[step], &p[..2]);
            let hi = bilinear(&path.images()[step + 1], &q[..2]);
            let vec_md = k * (hi - lo);
            let y = bundle.flow(t, &x[..2]).unwrap();
            let z = bundle.material_derivative(t, &y[..2]).unwrap();
            assert!(z >= 0.0);
            assert!((z - vec_md.abs()).abs() < 1e-10, "{z} vs {vec_md}");
        }
    }
}

#[test]
fn lagrangian_rate_norm_matches_data_terms() {
    let path = moving_path();
    let bundle = ExtensionBundle::new(&path, 4).unwrap();
    let g = path.images()[0].grid().clone();
    let k = path.k() as f64;
    let w = g.weights();
    // z at the start of each step, where the transport is the identity
    let lhs: f64 = (0..path.k())
        .map(|s| {
            (0..g.len())
                .map(|i| {
                    let z = bundle.material_derivative(s as f64 / k, &g.position(i)[..2]).unwrap();
                    w[i] * z * z
                })
                .sum::<f64>()
                / k
        })
        .sum();
    let rhs: f64 = (0..path.k())
        .map(|i| l2_distance_sq(&path.images()[i], &warp(&path.images()[i + 1], &path.deformations()[i]).unwrap()).unwrap())
        .sum::<f64>()
        * k;
    assert!((lhs - rhs).abs() < 1e-6 * rhs.max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn within_step_pairs_are_equalities() {
    let path = moving_path();
    let bundle = ExtensionBundle::new(&path, 16).unwrap();
    let rep = verify_admissibility(&bundle, 200, 3, 1e-4).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.within_step_deviation < 1e-6, "{rep:?}");
}

#[test]
fn converged_spd_path_is_admissible() {
    let g = GridSpec::square(10).unwrap();
    let k = ManifoldKind::Spd(2);
    let id = [1.0, 0.0, 1.0];
    let t = [2.5, 0.6, 0.8];
    let blob = |c: f64| {
        ManifoldImage::from_fn(g.clone(), k, |x| {
            let r2 = (x[0] - c).powi(2) + (x[1] - 0.5).powi(2);
            k.geodesic(&id, &t, (-r2 / 0.045).exp())
        })
        .unwrap()
    };
    let p = params(0.05);
    let cfg = SolverConfig { max_outer: 15, ..SolverConfig::default() };
    let run = discrete_geodesic(&blob(0.4), &blob(0.6), 4, &p, &cfg).unwrap();
    let bundle = ExtensionBundle::new(&run.path, 16).unwrap();
    let rep = verify_admissibility(&bundle, 300, 5, 1e-4).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.within_step_deviation < 1e-6, "{rep:?}");
}

#[test]
fn rk4_matches_logistic_flow() {
    let c = 0.8;
    let v = ExprVelocity::parse(&["0.8*x1*(1-x1)", "0"]).unwrap();
    let exact = |x0: f64| x0 * (c as f64).exp() / (1.0 - x0 + x0 * (c as f64).exp());
    let err = |s: usize| {
        [0.1, 0.37, 0.8]
            .iter()
            .map(|&x0| (flow_point(&v, &[x0, 0.3], 0.0, 1.0, s)[0] - exact(x0)).abs())
            .fold(0.0, f64::max)
    };
    assert!(err(256) <= 1e-8);
    let ratio = err(8) / err(16);
    assert!((ratio - 16.0).abs() < 2.0, "{ratio}");
    let g = GridSpec::square(4).unwrap();
    let ys = integrate_flow(&ZeroVelocity(2), &g, 5);
    assert!(ys.iter().all(|y| y == &ys[0]));
    assert_eq!(flow_point(&ZeroVelocity(2), &[0.3, 0.4], 0.0, 1.0, 10)[..2], [0.3, 0.4]);
}

fn swirl(amp: f64) -> Arc<dyn VelocityField> {
    Arc::new(
        ExprVelocity::parse(&[
            &format!("{amp}*(1+0.5*sin(pi*t))*sin(pi*x1)^2*pi*sin(2*pi*x2)"),
            &format!("-{amp}*(1+0.5*sin(pi*t))*sin(pi*x2)^2*pi*sin(2*pi*x1)"),
        ])
        .unwrap(),
    )
}

fn scenario(
    grid: GridSpec,
    velocity: Arc<dyn VelocityField>,
    rate: RateSource,
    start: Arc<dyn ImageField>,
    end: Arc<dyn ImageField>,
) -> AnalyticScenario {
    AnalyticScenario {
        grid,
        velocity,
        rate,
        start,
        end,
        flow_steps: 128,
        samples_per_step: 16,
        compatibility_tol: 1e-6,
    }
}

#[test]
fn static_scenario_recovers_constant_path() {
    let g = GridSpec::square(8).unwrap();
    let a: Arc<dyn ImageField> = Arc::new(ExprImage::parse(ManifoldKind::Spd(2), &["x1", "0.2", "-x2"]).unwrap());
    let sc = scenario(g, Arc::new(ZeroVelocity(2)), RateSource::Zero, a.clone(), a);
    let p = params(0.1);
    assert_eq!(sc.continuous_energy(&p).unwrap(), 0.0);
    let r = sc.recovery_sequence(4, &p).unwrap();
    assert_eq!(r.j_k, 0.0);
    assert_eq!(r.branches.zero, 64);
    for img in r.path.images() {
        assert_eq!(img, &r.path.images()[0]);
    }
}

#[test]
fn pure_transport_recovery_converges() {
    let g = GridSpec::square(10).unwrap();
    let v = swirl(0.03);
    let a: Arc<dyn ImageField> = Arc::new(ExprImage::parse(ManifoldKind::Euclidean(1), &["x1"]).unwrap());
    let b: Arc<dyn ImageField> = Arc::new(TransportedImage { base: a.clone(), velocity: v.clone(), steps: 128 });
    let sc = scenario(g, v, RateSource::Zero, a, b);
    let p = params(10.0);
    let j = sc.continuous_energy(&p).unwrap();
    let diffs: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&k| {
            let r = sc.recovery_sequence(k, &p).unwrap();
            assert_eq!(r.branches.zero, 100);
            assert_eq!(r.beta_k, 1.0 / k as f64);
            (r.j_k - j).abs()
        })
        .collect();
    assert!(diffs[1] < diffs[0] && diffs[2] < diffs[1], "{diffs:?}");
}

#[test]
fn pure_blending_recovery_matches_closed_form() {
    let g = GridSpec::square(8).unwrap();
    let kind = ManifoldKind::Spd(2);
    let a: Arc<dyn ImageField> = Arc::new(ExprImage::parse(kind, &["0.5*x1", "0.1", "0"]).unwrap());
    let b: Arc<dyn ImageField> = Arc::new(ExprImage::parse(kind, &["1.2", "x2", "-0.4"]).unwrap());
    let sc = scenario(g.clone(), Arc::new(ZeroVelocity(2)), RateSource::EndpointDistance, a.clone(), b.clone());
    let p = params(0.2);
    let ia = a.sample_grid(&g).unwrap();
    let ib = b.sample_grid(&g).unwrap();
    let closed = l2_distance_sq(&ia, &ib).unwrap() / 0.2;
    assert!((sc.continuous_energy(&p).unwrap() - closed).abs() < 1e-10 * closed);
    let r = sc.recovery_sequence(8, &p).unwrap();
    assert_eq!(r.branches.regular, 64);
    for (k, img) in r.path.images().iter().enumerate() {
        let want = pointwise_geodesic(&ia, &ib, k as f64 / 8.0).unwrap();
        for i in 0..g.len() {
            assert!(kind.dist(img.value(i), want.value(i)) < 1e-9);
        }
    }
    assert!((r.j_k - closed).abs() < 1e-8 * closed, "{} vs {closed}", r.j_k);
}

#[test]
fn incompatible_scenario_is_rejected() {
    let g = GridSpec::square(6).unwrap();
    let a: Arc<dyn ImageField> = Arc::new(ExprImage::parse(ManifoldKind::Euclidean(1), &["x1"]).unwrap());
    let b: Arc<dyn ImageField> = Arc::new(ExprImage::parse(ManifoldKind::Euclidean(1), &["x1+1"]).unwrap());
    let rate = RateSource::Expr(Expr::parse("0.5").unwrap());
    let sc = scenario(g, Arc::new(ZeroVelocity(2)), rate, a, b);
    assert!(matches!(sc.recovery_sequence(4, &params(0.1)), Err(Error::ScenarioRejected(_))));
}

#[test]
fn rough_velocity_needs_more_steps() {
    let g = GridSpec::square(8).unwrap();
    let a: Arc<dyn ImageField> = Arc::new(ExprImage::parse(ManifoldKind::Euclidean(1), &["x1"]).unwrap());
    let sc = scenario(g, swirl(1.0), RateSource::Zero, a.clone(), a);
    assert!(matches!(sc.recovery_sequence(2, &params(0.1)), Err(Error::Contract(_))));
}

#[test]
fn guarded_branch_for_small_rates() {
    let g = GridSpec::square(6).unwrap();
    let kind = ManifoldKind::Euclidean(1);
    let a: Arc<dyn ImageField> = Arc::new(ExprImage::parse(kind, &["0"]).unwrap());
    let b: Arc<dyn ImageField> = Arc::new(ExprImage::parse(kind, &["0.1*x1"]).unwrap());
    let sc = scenario(g.clone(), Arc::new(ZeroVelocity(2)), RateSource::EndpointDistance, a, b);
    let r = sc.recovery_sequence(4, &params(0.1)).unwrap();
    // sqrt(beta) = 1/2 exceeds every rate except where it vanishes
    assert_eq!(r.branches.zero, 6);
    assert_eq!(r.branches.guarded, 30);
    let last = r.path.images().last().unwrap();
    for i in 0..g.len() {
        let x = g.position(i);
        let want = 0.1 * x[0] * (0.1 * x[0] / 0.5).min(1.0);
        assert!((last.value(i)[0] - want).abs() < 1e-12);
    }
}
