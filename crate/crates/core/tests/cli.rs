use std::path::Path;
use std::process::{Command, Output};

use twoclass_ar::scenario::{parse_scenario, BENCHMARK_TOML};

const BIN: &str = env!("CARGO_BIN_EXE_twoclass-ar");

/// Benchmark with coarser grids so each run takes a second or two.
fn quick_scenario() -> String {
    BENCHMARK_TOML
        .replace("cells = 400", "cells = 200")
        .replace("nodes = 201", "nodes = 101")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn invalid_exponent_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = quick_scenario().replacen("pressure_exponent = 2.0", "pressure_exponent = 0.5", 1);
    let sc = write(dir.path(), "bad.toml", &text);
    let o = run(&["--scenario", &sc, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma must exceed 1"), "{}", stderr(&o));
}

#[test]
fn free_flow_equilibrium_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = quick_scenario()
        .replace("density = 0.26", "density = 0.02")
        .replace("density = 0.05", "density = 0.005");
    let sc = write(dir.path(), "free.toml", &text);
    let o = run(&["--scenario", &sc]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("equilibrium not congested") && e.contains("λ₄"), "{e}");
}

#[test]
fn syntax_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = quick_scenario().replace("width = 7.5", "width = = 7.5");
    let sc = write(dir.path(), "broken.toml", &text);
    let o = run(&["--scenario", &sc]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 7"), "{}", stderr(&o));
}

#[test]
fn kernel_failure_is_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let text = quick_scenario()
        .replace("max_iter = 200", "max_iter = 2")
        .replace("tol = 1e-8", "tol = 1e-15");
    let sc = write(dir.path(), "stiff.toml", &text);
    let o = run(&["--scenario", &sc, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn missing_scenario_is_an_io_error() {
    let o = run(&["--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn closed_loop_run_writes_outputs_and_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "quick.toml", &quick_scenario());
    let out = dir.path().join("out");
    let o = run(&[
        "--scenario",
        &sc,
        "--mode",
        "closed",
        "--dump-kernels",
        "--svg",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("t_F"), "{stdout}");
    for f in [
        "fields_closed.csv",
        "series_closed.csv",
        "riemann.csv",
        "kernels.csv",
        "manifest.toml",
        "fields_closed.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let series = std::fs::read_to_string(out.join("series_closed.csv")).unwrap();
    assert!(series.starts_with("t,U,supnorm,l2norm,betaL"));

    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("convergence_time"));
    let original = parse_scenario(&quick_scenario()).unwrap();
    assert_eq!(parse_scenario(&manifest).unwrap(), original);

    // rerunning from the manifest reproduces every byte
    let sc2 = write(dir.path(), "manifest.toml", &manifest);
    let out2 = dir.path().join("again");
    let o = run(&[
        "--scenario",
        &sc2,
        "--mode",
        "closed",
        "--dump-kernels",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["fields_closed.csv", "series_closed.csv", "riemann.csv", "kernels.csv"] {
        let a = std::fs::read(out.join(f)).unwrap();
        let b = std::fs::read(out2.join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn compare_prints_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "quick.toml", &quick_scenario());
    let o = run(&[
        "--scenario",
        &sc,
        "--mode",
        "both",
        "--compare",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout
        .lines()
        .find(|l| l.contains("closed/open L2 at t_F"))
        .expect("comparison line");
    let ratio: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(ratio < 0.1, "{line}");
    assert!(dir.path().join("out/fields_open.csv").is_file());
}

#[test]
fn jobs_run_scenarios_in_separate_directories() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", &quick_scenario());
    let b = write(dir.path(), "b.toml", &quick_scenario().replace("cfl = 0.9", "cfl = 0.8"));
    let out = dir.path().join("out");
    let o = run(&[
        "--scenario",
        &a,
        "--scenario",
        &b,
        "--jobs",
        "2",
        "--mode",
        "open",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("a/series_open.csv").is_file());
    assert!(out.join("b/series_open.csv").is_file());
}

#[test]
fn refinement_study_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = quick_scenario()
        .replace("cells = 200", "cells = 50")
        .replace("nodes = 101", "nodes = 26");
    let sc = write(dir.path(), "coarse.toml", &text);
    let out = dir.path().join("out");
    let o = run(&["--scenario", &sc, "--refine", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("refinement.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}
