//! Model to closed loop: equilibrium, Riemann system, kernels, gains,
//! simulation, and the files written for a scenario run.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::controller::{convergence_time, BacksteppingTransform, FeedbackGains};
use crate::error::Result;
use crate::kernel::{kernel_residual, solve_kernels, KernelConfig, KernelSolution};
use crate::model::{CharacteristicBasis, EquilibriumState, ModelParams};
use crate::output;
use crate::riemann::RiemannSystem;
use crate::scenario::{RunSummary, Scenario, Summary};
use crate::sim::{self, Mode, SimConfig, SimResult};

/// Margin on the convergence time at which convergence is assessed.
pub const CONVERGENCE_MARGIN: f64 = 1.05;

/// Everything the controller needs, computed once per equilibrium.
#[derive(Debug, Clone)]
pub struct Design {
    pub params: ModelParams,
    pub equilibrium: EquilibriumState,
    pub basis: CharacteristicBasis,
    pub riemann: RiemannSystem,
    pub kernels: KernelSolution,
}

impl Design {
    pub fn build(params: &ModelParams, densities: [f64; 2], kernel: &KernelConfig) -> Result<Self> {
        let equilibrium = EquilibriumState::from_densities(densities[0], densities[1], params)?;
        let basis = CharacteristicBasis::new(&equilibrium);
        let riemann = RiemannSystem::build(&equilibrium, &basis, params.length)?;
        let kernels = solve_kernels(&riemann, kernel)?;
        Ok(Self {
            params: params.clone(),
            equilibrium,
            basis,
            riemann,
            kernels,
        })
    }

    pub fn convergence_time(&self) -> f64 {
        convergence_time(&self.riemann)
    }

    pub fn gains(&self, xs: &[f64]) -> Result<FeedbackGains> {
        FeedbackGains::build(&self.riemann, &self.kernels, xs)
    }

    pub fn transform(&self, xs: &[f64]) -> BacksteppingTransform {
        BacksteppingTransform::new(&self.kernels, xs)
    }

    pub fn simulate(&self, cfg: &SimConfig) -> Result<SimResult> {
        cfg.validate()?;
        let xs = cfg.nodes(self.params.length);
        let transform = self.transform(&xs);
        let gains = match cfg.mode {
            Mode::ClosedLoop => Some(self.gains(&xs)?),
            _ => None,
        };
        sim::run(cfg, &self.equilibrium, &self.riemann, gains.as_ref(), Some(&transform))
    }

    pub fn summary(&self) -> Summary {
        let rs = &self.riemann;
        Summary {
            lambda: self.basis.speeds,
            delta: self.basis.delta,
            riemann_speeds: rs.speeds(),
            kappa: rs.kappa(),
            q0: rs.q0_bar().into(),
            r1: [rs.r1_bar()[0], rs.r1_bar()[1], rs.r1_bar()[2]],
            convergence_time: self.convergence_time(),
            t_end: f64::NAN,
            kernel_iterations: self.kernels.iterations(),
            kernel_residual: kernel_residual(rs, &self.kernels).max(),
            runs: Vec::new(),
        }
    }
}

pub fn run_summary(r: &SimResult) -> RunSummary {
    let s = &r.series;
    let at = |t: f64, v: &[f64]| {
        if s.t.last().copied().unwrap_or(0.0) + 1e-9 < t {
            f64::NAN
        } else {
            s.index_at(t).map(|i| v[i]).unwrap_or(f64::NAN)
        }
    };
    RunSummary {
        mode: r.mode,
        dt: r.dt,
        steps: s.len() - 1,
        initial_sup_norm: s.sup_norm[0],
        final_sup_norm: r.final_sup_norm(),
        sup_norm_after_convergence: at(CONVERGENCE_MARGIN * r.t_f, &s.sup_norm),
        l2_norm_at_convergence: at(r.t_f, &s.l2_norm),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub modes: Vec<Mode>,
    pub output_dir: Option<PathBuf>,
    pub dump_kernels: bool,
    pub refine: u32,
    pub svg: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            modes: vec![Mode::ClosedLoop],
            output_dir: None,
            dump_kernels: false,
            refine: 0,
            svg: false,
        }
    }
}

/// One level of a grid refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    pub cells: usize,
    pub kernel_nodes: usize,
    pub kernel_residual: f64,
    pub initial_control: f64,
    pub sup_norm_after_convergence: f64,
    pub l2_norm_at_convergence: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub summary: Summary,
    pub refinement: Vec<RefinementRow>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Closed-loop runs with `2^level` times finer simulation and kernel grids.
pub fn refinement_study(s: &Scenario, levels: u32) -> Result<Vec<RefinementRow>> {
    let mut rows = Vec::new();
    for level in 0..=levels {
        let kernel = KernelConfig {
            nodes: (s.kernel.nodes - 1) * (1 << level) + 1,
            ..s.kernel
        };
        let design = Design::build(&s.params, s.densities, &kernel)?;
        let t_f = design.convergence_time();
        let mut cfg = s.sim_config(Mode::ClosedLoop, t_f);
        cfg.cells = s.sim.cells << level;
        cfg.output_stride = usize::MAX;
        let r = design.simulate(&cfg)?;
        let rs = run_summary(&r);
        rows.push(RefinementRow {
            cells: cfg.cells,
            kernel_nodes: kernel.nodes,
            kernel_residual: kernel_residual(&design.riemann, &design.kernels).max(),
            initial_control: r.series.control[0],
            sup_norm_after_convergence: rs.sup_norm_after_convergence,
            l2_norm_at_convergence: rs.l2_norm_at_convergence,
        });
    }
    Ok(rows)
}

/// Runs every requested mode and writes `fields_<mode>.csv`,
/// `series_<mode>.csv`, `riemann.csv`, `manifest.toml` and on request
/// `kernels.csv`, `refinement.csv` and `fields_<mode>.svg`.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let dir = opts.output_dir.clone().unwrap_or_else(|| s.output_dir.clone());
    let design = Design::build(&s.params, s.densities, &s.kernel)?;
    let t_f = design.convergence_time();
    let mut summary = design.summary();
    summary.t_end = s.sim_config(s.sim.mode, t_f).t_end;

    let mut results = Vec::new();
    for &mode in &opts.modes {
        let cfg = s.sim_config(mode, t_f);
        let r = design.simulate(&cfg)?;
        summary.runs.push(run_summary(&r));
        results.push(r);
    }
    let refinement = if opts.refine > 0 {
        refinement_study(s, opts.refine)?
    } else {
        Vec::new()
    };

    fs::create_dir_all(&dir)?;
    let eq = &design.equilibrium;
    for r in &results {
        output::write_fields(create(&dir.join(format!("fields_{}.csv", r.mode)))?, eq, r)?;
        output::write_series(create(&dir.join(format!("series_{}.csv", r.mode)))?, r)?;
        if opts.svg {
            fs::write(dir.join(format!("fields_{}.svg", r.mode)), output::heatmap_svg(eq, r))?;
        }
    }
    let xs = sim::uniform_nodes(s.sim.cells, s.params.length);
    output::write_riemann(create(&dir.join("riemann.csv"))?, &design.riemann, &xs)?;
    if opts.dump_kernels {
        design.kernels.write_csv(create(&dir.join("kernels.csv"))?)?;
    }
    if !refinement.is_empty() {
        let mut w = csv::Writer::from_writer(create(&dir.join("refinement.csv"))?);
        w.write_record([
            "cells",
            "kernel_nodes",
            "kernel_residual",
            "U0",
            "supnorm_after_tF",
            "l2norm_at_tF",
        ])?;
        for row in &refinement {
            w.write_record(&[
                row.cells.to_string(),
                row.kernel_nodes.to_string(),
                row.kernel_residual.to_string(),
                row.initial_control.to_string(),
                row.sup_norm_after_convergence.to_string(),
                row.l2_norm_at_convergence.to_string(),
            ])?;
        }
        w.flush()?;
    }
    fs::write(dir.join("manifest.toml"), s.to_toml(Some(summary.clone())))?;
    Ok(RunReport {
        output_dir: dir,
        summary,
        refinement,
    })
}
