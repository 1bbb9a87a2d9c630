//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use metamorph_core::energy::EnergyParams;
use metamorph_core::extension::{verify_admissibility, ExtensionBundle};
use metamorph_core::field::{warp, ManifoldImage};
use metamorph_core::pathsolver::{discrete_geodesic, register, DiscretePath};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::mvf;
use crate::recover::recovery_study;
use crate::render::render_to;
use crate::report::{PathReport, RunReport, SolveReport, Timing};
use crate::sweep::{sweep, SweepOptions};
use crate::synth::Scenario;
use crate::verify;

#[derive(Debug, Parser)]
#[command(name = "metamorph", version, about = "Metamorphosis of manifold-valued images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Model and solver overrides shared by all subcommands.
#[derive(Debug, Default, Clone, Args)]
pub struct Common {
    /// TOML config with [density], [regularizer], [coupling], [solver], [sweep].
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Allow regularizer order 2 in two dimensions.
    #[arg(long = "pragmatic-m2", global = true)]
    pub pragmatic_m2: bool,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Endpoints from files or from a bundled scenario.
#[derive(Debug, Clone, Args)]
pub struct Endpoints {
    #[arg(long)]
    pub scenario: Option<Scenario>,
    /// Grid size of a bundled scenario.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, requires = "end")]
    pub start: Option<PathBuf>,
    #[arg(long, requires = "start")]
    pub end: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the endpoints of a bundled scenario as MVF files.
    Synth {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Register a moving image onto a reference image.
    Register {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        moving: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Discrete geodesic between two images.
    Geodesic {
        #[command(flatten)]
        endpoints: Endpoints,
        #[arg(long = "K", default_value_t = 4)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Sample the time-continuous extension of a stored path.
    Extend {
        /// Directory written by `geodesic`.
        #[arg(long)]
        path: PathBuf,
        /// Comma-separated times in [0,1].
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        t: Vec<f64>,
        /// Also check admissibility on this many random triples.
        #[arg(long)]
        triples: Option<usize>,
        #[arg(long, default_value_t = 64)]
        samples_per_step: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Recovery-sequence energies of an analytic scenario.
    Recover {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long = "K", value_delimiter = ',', default_value = "4,8,16,32,64")]
        k: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Convergence study over increasing K.
    Sweep {
        #[command(flatten)]
        endpoints: Endpoints,
        #[arg(long = "K", value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Solve every K from scratch instead of from the previous path.
        #[arg(long)]
        cold: bool,
        #[command(flatten)]
        common: Common,
    },
    /// SVG or PNG glyph render of a tensor image.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run invariant suites.
    Verify {
        /// One of manifold, density, gradient, extension, mvf, or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    /// Config from file or defaults, then flag overrides. A scenario sets the
    /// data weight unless a config file or `--delta` does.
    pub fn config(&self, scenario: Option<Scenario>) -> Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => {
                let mut c = Config::default();
                if let Some(s) = scenario {
                    c.coupling.delta = s.delta();
                }
                c
            }
        };
        if let Some(v) = self.seed {
            c.solver.seed = v;
        }
        if let Some(v) = self.tol {
            c.solver.tol = v;
        }
        if let Some(v) = self.levels {
            c.solver.levels = v;
        }
        if let Some(v) = self.m {
            c.regularizer.m = v;
        }
        if self.pragmatic_m2 {
            c.regularizer.pragmatic = true;
        }
        if let Some(v) = self.epsilon {
            c.coupling.epsilon = v;
        }
        if let Some(v) = self.delta {
            c.coupling.delta = v;
        }
        if let Some(v) = self.lambda {
            c.density.lambda = v;
        }
        if let Some(v) = self.mu {
            c.density.mu = v;
        }
        if let Some(v) = self.gamma {
            c.regularizer.gamma = v;
        }
        if let Some(v) = self.beta {
            c.density.beta = Some(v);
        }
        Ok(c)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .ok_or_else(|| HarnessError::Validation("--out is required".into()))?;
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(dir.display().to_string(), e))?;
        Ok(dir)
    }
}

impl Endpoints {
    fn load(&self) -> Result<(ManifoldImage, ManifoldImage)> {
        match (&self.scenario, &self.start, &self.end) {
            (Some(s), None, None) => s.endpoints(self.n),
            (None, Some(a), Some(b)) => Ok((mvf::read_image(a)?, mvf::read_image(b)?)),
            _ => Err(HarnessError::Validation(
                "give either --scenario or both --start and --end".into(),
            )),
        }
    }
}

fn regularizer_warnings(params: &EnergyParams, n: usize) -> Vec<String> {
    params.reg.warning(n).into_iter().collect()
}

pub fn image_file(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("image_{k:03}.mvf"))
}

pub fn deformation_file(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("phi_{k:03}.mvf"))
}

/// Writes `image_000..image_K` and `phi_001..phi_K`.
pub fn write_path(dir: &Path, path: &DiscretePath) -> Result<()> {
    for (k, img) in path.images().iter().enumerate() {
        mvf::write_image(&image_file(dir, k), img)?;
    }
    for (k, phi) in path.deformations().iter().enumerate() {
        mvf::write_deformation(&deformation_file(dir, k + 1), phi)?;
    }
    Ok(())
}

pub fn read_path(dir: &Path, params: &EnergyParams) -> Result<DiscretePath> {
    let mut images = Vec::new();
    while image_file(dir, images.len()).exists() {
        images.push(mvf::read_image(&image_file(dir, images.len()))?);
    }
    if images.len() < 3 {
        return Err(HarnessError::Validation(format!(
            "{} holds no path with at least 2 steps",
            dir.display()
        )));
    }
    let deformations = (1..images.len())
        .map(|k| mvf::read_deformation(&deformation_file(dir, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscretePath::new(images, deformations, params)?)
}

fn finish(dir: &Path, report: &RunReport, timing: &Timing) -> Result<()> {
    report.write(&dir.join("report.json"))?;
    timing.write(&dir.join("timing.json"))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut timing = Timing::default();
    match cli.command {
        Command::Synth { scenario, n, common } => {
            let dir = common.out_dir()?;
            let (a, b) = scenario.endpoints(n)?;
            mvf::write_image(&dir.join("start.mvf"), &a)?;
            mvf::write_image(&dir.join("end.mvf"), &b)?;
            let mut report = RunReport::new("synth", &common.config(Some(scenario))?);
            report.set("scenario", scenario);
            report.set("n", n);
            timing.lap("synth");
            finish(&dir, &report, &timing)
        }
        Command::Register { reference, moving, common } => {
            let dir = common.out_dir()?;
            let config = common.config(None)?;
            let a = mvf::read_image(&reference)?;
            let b = mvf::read_image(&moving)?;
            let params = config.energy_params_for(a.grid().dim())?;
            let reg = register(&a, &b, &params, &config.solver)?;
            timing.lap("register");
            mvf::write_deformation(&dir.join("phi.mvf"), &reg.phi)?;
            mvf::write_image(&dir.join("warped.mvf"), &warp(&b, &reg.phi)?)?;
            let mut report = RunReport::new("register", &config);
            report.warnings = regularizer_warnings(&params, a.grid().dim());
            report.set("energy", reg.energy);
            report.set("summary", reg.summary());
            report.set("min_det", reg.phi.min_jacobian_det());
            finish(&dir, &report, &timing)
        }
        Command::Geodesic { endpoints, k, common } => {
            let dir = common.out_dir()?;
            let config = common.config(endpoints.scenario)?;
            let (a, b) = endpoints.load()?;
            let params = config.energy_params_for(a.grid().dim())?;
            let run = discrete_geodesic(&a, &b, k, &params, &config.solver)?;
            timing.lap("solve");
            write_path(&dir, &run.path)?;
            let mut report = RunReport::new("geodesic", &config);
            report.warnings = regularizer_warnings(&params, a.grid().dim());
            report.path = Some(PathReport::new(&run.path, &params));
            report.solve = Some(SolveReport::new(&run));
            finish(&dir, &report, &timing)
        }
        Command::Extend { path, t, triples, samples_per_step, common } => {
            let dir = common.out_dir()?;
            let config = common.config(None)?;
            let params = config.energy_params()?;
            let p = read_path(&path, &params)?;
            let bundle = ExtensionBundle::new(&p, samples_per_step)?;
            for (i, &ti) in t.iter().enumerate() {
                if !(0.0..=1.0).contains(&ti) {
                    return Err(HarnessError::Validation(format!("time {ti} outside [0,1]")));
                }
                mvf::write_image(&dir.join(format!("extended_{i:03}.mvf")), &bundle.image(ti)?)?;
            }
            timing.lap("extend");
            let mut report = RunReport::new("extend", &config);
            report.set("times", &t);
            report.set("ode_residual", bundle.ode_residual()?);
            if let Some(m) = triples {
                let adm = verify_admissibility(&bundle, m, config.solver.seed, 1e-4)?;
                timing.lap("admissibility");
                report.set("admissibility", adm);
            }
            finish(&dir, &report, &timing)
        }
        Command::Recover { scenario, n, k, common } => {
            let dir = common.out_dir()?;
            let config = common.config(Some(scenario))?;
            let sc = scenario.analytic(n)?;
            let params = config.energy_params_for(2)?;
            let table = recovery_study(&sc, &k, &params)?;
            timing.lap("recover");
            let mut report = RunReport::new("recover", &config);
            report.set("scenario", scenario);
            report.set("recovery", table);
            finish(&dir, &report, &timing)
        }
        Command::Sweep { endpoints, k, cold, common } => {
            let dir = common.out_dir()?;
            let config = common.config(endpoints.scenario)?;
            let (a, b) = endpoints.load()?;
            let params = config.energy_params_for(a.grid().dim())?;
            let options = SweepOptions {
                ks: k.unwrap_or_else(|| config.sweep.ks.clone()),
                compare_steps: config.sweep.compare_steps,
                warm_start: !cold,
            };
            let (table, runs) = sweep(&a, &b, &options, &params, &config.solver)?;
            timing.lap("sweep");
            for run in &runs {
                let sub = dir.join(format!("K{:03}", run.path.k()));
                std::fs::create_dir_all(&sub)
                    .map_err(|e| HarnessError::io(sub.display().to_string(), e))?;
                write_path(&sub, &run.path)?;
            }
            let mut report = RunReport::new("sweep", &config);
            report.warnings = regularizer_warnings(&params, a.grid().dim());
            report.set("distances_decreasing", table.distances_decreasing());
            report.set("differences_decreasing", table.differences_decreasing());
            report.sweep = Some(table);
            finish(&dir, &report, &timing)
        }
        Command::Render { input, common } => {
            let out = common
                .out
                .clone()
                .ok_or_else(|| HarnessError::Validation("--out is required".into()))?;
            render_to(&mvf::read_image(&input)?, &out)
        }
        Command::Verify { suite, samples, common } => {
            let config = common.config(None)?;
            let names: Vec<&str> = if suite == "all" {
                verify::SUITES.to_vec()
            } else {
                vec![suite.as_str()]
            };
            let mut all_pass = true;
            let mut results = Vec::new();
            for name in names {
                let r = verify::run(name, samples, config.solver.seed)?;
                println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.suite);
                for c in r.checks.iter().filter(|c| !c.pass) {
                    println!("  {}: {:e} (limit {:e})", c.name, c.value, c.limit);
                }
                all_pass &= r.pass;
                results.push(r);
            }
            timing.lap("verify");
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)
                    .map_err(|e| HarnessError::io(dir.display().to_string(), e))?;
                let mut report = RunReport::new("verify", &config);
                report.set("suites", results);
                finish(dir, &report, &timing)?;
            }
            if all_pass {
                Ok(())
            } else {
                Err(HarnessError::Validation("verification failed".into()))
            }
        }
    }
}

/// Caps the worker pool from `METAMORPH_THREADS`.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("METAMORPH_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| HarnessError::Validation(format!("METAMORPH_THREADS = '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}
