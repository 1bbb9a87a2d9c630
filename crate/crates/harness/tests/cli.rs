use std::path::Path;
use std::process::Command;

use metamorph_core::energy::EnergyParams;
use metamorph_core::pathsolver::path_energy;
use metamorph_harness::cli::read_path;
use metamorph_harness::config::Config;
use metamorph_harness::report::RunReport;

fn metamorph(args: &[&str], threads: &str) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_metamorph"))
        .args(args)
        .env("METAMORPH_THREADS", threads)
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn geodesic(out: &Path, threads: &str) {
    let o = metamorph(
        &[
            "geodesic", "--scenario", "spd-blob", "--n", "8", "--K", "2", "--levels", "1",
            "--tol", "1e-3", "--seed", "7", "--out", out.to_str().unwrap(),
        ],
        threads,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn geodesic_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    geodesic(&a, "1");
    geodesic(&b, "1");
    geodesic(&c, "2");
    let fa = files(&a);
    assert_eq!(fa.len(), 1 + 3 + 2);
    assert_eq!(fa, files(&b));

    let ra = RunReport::read(&a.join("report.json")).unwrap();
    let rc = RunReport::read(&c.join("report.json")).unwrap();
    let (ja, jc) = (ra.path.as_ref().unwrap().energy, rc.path.as_ref().unwrap().energy);
    assert!((ja - jc).abs() <= 1e-12 * ja.abs().max(1.0));
    assert!(ra.solve.as_ref().unwrap().monotone);
    assert_eq!(ra.config.solver.seed, 7);
    assert_eq!(ra.config.coupling.delta, 0.1);

    // the reported energy is recomputed from the stored files
    let params: EnergyParams = ra.config.energy_params().unwrap();
    let path = read_path(&a, &params).unwrap();
    assert!((path_energy(&path, &params).unwrap() - ja).abs() <= 1e-10);
    let timing: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("timing.json")).unwrap()).unwrap();
    assert!(timing["total"].as_f64().unwrap() >= 0.0);
}

#[test]
fn synth_extend_and_render_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = d.join("s");
    assert!(metamorph(&["synth", "--scenario", "spd-blob", "--n", "6", "--out", s.to_str().unwrap()], "1").status.success());
    let g = d.join("g");
    let o = metamorph(
        &[
            "geodesic", "--start", s.join("start.mvf").to_str().unwrap(), "--end",
            s.join("end.mvf").to_str().unwrap(), "--K", "2", "--levels", "1", "--tol", "1e-2",
            "--delta", "0.1", "--out", g.to_str().unwrap(),
        ],
        "1",
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = d.join("e");
    let o = metamorph(
        &[
            "extend", "--path", g.to_str().unwrap(), "--t", "0,0.25,1", "--delta", "0.1",
            "--samples-per-step", "8", "--triples", "20", "--out", e.to_str().unwrap(),
        ],
        "1",
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let start = std::fs::read(s.join("start.mvf")).unwrap();
    assert_eq!(std::fs::read(e.join("extended_000.mvf")).unwrap(), start);
    let rep = RunReport::read(&e.join("report.json")).unwrap();
    assert_eq!(rep.values["admissibility"]["pass"], serde_json::Value::Bool(true));

    let svg = d.join("x.svg");
    let o = metamorph(&["render", "--input", e.join("extended_001.mvf").to_str().unwrap(), "--out", svg.to_str().unwrap()], "1");
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    let png = d.join("x.png");
    assert!(metamorph(&["render", "--input", s.join("end.mvf").to_str().unwrap(), "--out", png.to_str().unwrap()], "1").status.success());
    assert!(std::fs::read(&png).unwrap().starts_with(b"\x89PNG"));
}

#[test]
fn verify_and_exit_codes() {
    let o = metamorph(&["verify", "--suite", "manifold", "--samples", "200"], "1");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS manifold"));
    assert_eq!(metamorph(&["verify", "--suite", "nope"], "1").status.code(), Some(2));
    assert_eq!(metamorph(&["geodesic", "--bogus"], "1").status.code(), Some(2));
    assert_eq!(metamorph(&["geodesic", "--scenario", "spd-blob", "--m", "1", "--out", "/tmp/x"], "1").status.code(), Some(2));
    assert_eq!(metamorph(&["verify"], "zero").status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mvf");
    std::fs::write(&bad, b"MVF1junk").unwrap();
    assert_eq!(metamorph(&["render", "--input", bad.to_str().unwrap(), "--out", "/tmp/y.svg"], "1").status.code(), Some(2));
    use metamorph_harness::HarnessError;
    assert_eq!(HarnessError::Core(metamorph_core::Error::Inadmissible("x".into())).exit_code(), 3);
    assert_eq!(HarnessError::Core(metamorph_core::Error::Domain(-1.0)).exit_code(), 3);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[coupling]\ndelta = 0.2\n[solver]\nlevels = 1\nmax_outer = 3\n").unwrap();
    let out = dir.path().join("o");
    let o = metamorph(
        &[
            "recover", "--scenario", "blending", "--n", "6", "--K", "4,8", "--config",
            cfg.to_str().unwrap(), "--mu", "2", "--out", out.to_str().unwrap(),
        ],
        "1",
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = RunReport::read(&out.join("report.json")).unwrap();
    let expect = Config::from_toml("[coupling]\ndelta = 0.2\n[density]\nmu = 2.0\n[solver]\nlevels = 1\nmax_outer = 3\n").unwrap();
    assert_eq!(rep.config, expect);
    assert_eq!(rep.values["recovery"]["rows"].as_array().unwrap().len(), 2);
}
