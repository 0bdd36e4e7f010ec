//! Command-line front end.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::error::{Error, Result};
use crate::pipeline::{run_scenario, RunOptions, RunReport};
use crate::scenario::{parse_scenario, Scenario, BENCHMARK_TOML};
use crate::sim::Mode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Open,
    Closed,
    Target,
    Both,
}

#[derive(Debug, Parser)]
#[command(
    name = "twoclass-ar",
    version,
    about = "Backstepping ramp-metering control of two-class congested traffic"
)]
pub struct Cli {
    /// Scenario file (TOML). Repeat for several scenarios. Defaults to the
    /// shipped congested benchmark.
    #[arg(long = "scenario", value_name = "PATH")]
    pub scenarios: Vec<PathBuf>,

    /// Simulation mode; defaults to the scenario's `sim.mode`.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Print an open-loop versus closed-loop comparison.
    #[arg(long)]
    pub compare: bool,

    /// Output directory, overriding the scenario's `output_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Write the kernels on the triangular grid to kernels.csv.
    #[arg(long)]
    pub dump_kernels: bool,

    /// Grid doublings for a closed-loop convergence study.
    #[arg(long, value_name = "K", default_value_t = 0)]
    pub refine: u32,

    /// Scenarios run in parallel.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub jobs: usize,

    /// Also write space-time heatmaps as SVG.
    #[arg(long)]
    pub svg: bool,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_IO
    }
}

fn modes(arg: Option<ModeArg>, compare: bool, s: &Scenario) -> Vec<Mode> {
    let mut m = match arg {
        None => vec![s.sim.mode],
        Some(ModeArg::Open) => vec![Mode::OpenLoop],
        Some(ModeArg::Closed) => vec![Mode::ClosedLoop],
        Some(ModeArg::Target) => vec![Mode::TargetSystem],
        Some(ModeArg::Both) => vec![Mode::OpenLoop, Mode::ClosedLoop],
    };
    if compare {
        for need in [Mode::OpenLoop, Mode::ClosedLoop] {
            if !m.contains(&need) {
                m.push(need);
            }
        }
    }
    m
}

fn load(path: Option<&PathBuf>) -> Result<Scenario> {
    match path {
        None => parse_scenario(BENCHMARK_TOML),
        Some(p) => parse_scenario(&std::fs::read_to_string(p)?),
    }
}

fn job(cli: &Cli, path: Option<&PathBuf>) -> Result<RunReport> {
    let s = load(path)?;
    let output_dir = match (&cli.out, path) {
        (Some(out), Some(p)) if cli.scenarios.len() > 1 => {
            Some(out.join(p.file_stem().unwrap_or_default()))
        }
        (Some(out), _) => Some(out.clone()),
        (None, _) => None,
    };
    let opts = RunOptions {
        modes: modes(cli.mode, cli.compare, &s),
        output_dir,
        dump_kernels: cli.dump_kernels,
        refine: cli.refine,
        svg: cli.svg,
    };
    run_scenario(&s, &opts)
}

pub fn report(label: &str, r: &RunReport, compare: bool) -> String {
    use std::fmt::Write;
    let s = &r.summary;
    let mut o = String::new();
    let _ = writeln!(o, "scenario {label} -> {}", r.output_dir.display());
    for (i, l) in s.lambda.iter().enumerate() {
        let _ = writeln!(o, "  lambda{}   {:>12.6} m/s", i + 1, l);
    }
    let _ = writeln!(o, "  kappa     {:>12.6e}", s.kappa);
    let _ = writeln!(o, "  t_F       {:>12.4} s", s.convergence_time);
    let _ = writeln!(
        o,
        "  kernels   {} sweeps, residual {:.3e}",
        s.kernel_iterations, s.kernel_residual
    );
    let _ = writeln!(
        o,
        "  {:<7} {:>12} {:>14} {:>14} {:>14}",
        "mode", "sup(0)", "sup(end)", "sup(1.05 t_F)", "L2(t_F)"
    );
    for run in &s.runs {
        let _ = writeln!(
            o,
            "  {:<7} {:>12.4e} {:>14.4e} {:>14.4e} {:>14.4e}",
            run.mode.as_str(),
            run.initial_sup_norm,
            run.final_sup_norm,
            run.sup_norm_after_convergence,
            run.l2_norm_at_convergence
        );
    }
    if compare {
        let find = |m: Mode| s.runs.iter().find(|r| r.mode == m);
        if let (Some(o_), Some(c)) = (find(Mode::OpenLoop), find(Mode::ClosedLoop)) {
            let _ = writeln!(
                o,
                "  closed/open L2 at t_F: {:.3e}",
                c.l2_norm_at_convergence / o_.l2_norm_at_convergence
            );
        }
    }
    if !r.refinement.is_empty() {
        let _ = writeln!(
            o,
            "  {:>6} {:>8} {:>12} {:>14} {:>14}",
            "cells", "kernel", "residual", "sup(1.05 t_F)", "U(0)"
        );
        for row in &r.refinement {
            let _ = writeln!(
                o,
                "  {:>6} {:>8} {:>12.3e} {:>14.4e} {:>14.6e}",
                row.cells,
                row.kernel_nodes,
                row.kernel_residual,
                row.sup_norm_after_convergence,
                row.initial_control
            );
        }
    }
    o
}

/// Runs the tool and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let paths: Vec<Option<&PathBuf>> = if cli.scenarios.is_empty() {
        vec![None]
    } else {
        cli.scenarios.iter().map(Some).collect()
    };
    let jobs = cli.jobs.max(1);
    let mut results: Vec<Option<Result<RunReport>>> = (0..paths.len()).map(|_| None).collect();
    for (chunk_paths, chunk_out) in paths.chunks(jobs).zip(results.chunks_mut(jobs)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk_paths
                .iter()
                .map(|p| scope.spawn(|| job(&cli, *p)))
                .collect();
            for (h, slot) in handles.into_iter().zip(chunk_out.iter_mut()) {
                *slot = Some(h.join().expect("scenario thread panicked"));
            }
        });
    }

    let mut code = EXIT_OK;
    for (p, r) in paths.iter().zip(results) {
        let label = p.map(|p| p.display().to_string()).unwrap_or_else(|| "benchmark".into());
        match r.expect("every job ran") {
            Ok(rep) => print!("{}", report(&label, &rep, cli.compare)),
            Err(e) => {
                eprintln!("error: {label}: {e}");
                code = code.max(exit_code(&e));
            }
        }
    }
    code
}
