//! Scenario files.
//!
//! ```toml
//! output_dir = "out/benchmark"        # optional, default "output"
//!
//! [road]
//! length = 1000.0                     # m
//! width = 7.5                         # m
//!
//! [class1]                            # the faster class
//! free_flow_speed = 33.0              # m/s
//! pressure_exponent = 2.0
//! max_occupancy = 0.9
//! relaxation_time = 30.0              # s
//! vehicle_area = 10.0                 # m^2
//! density = 0.26                      # veh/m, equilibrium
//!
//! [class2]
//! # same keys
//!
//! [sim]                               # optional
//! cells = 400
//! cfl = 0.9
//! t_end = 350.0                       # s, default 1.5 t_F
//! output_stride = 10
//! mode = "closed"                     # open | closed | target
//!
//! [kernel]                            # optional
//! nodes = 201
//! tol = 1e-8
//! max_iter = 200
//! ```
//!
//! Run manifests use the same layout plus a `[summary]` table, so they parse
//! back into the scenario that produced them.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::model::{CharacteristicBasis, EquilibriumState, ModelParams, Regime, VehicleClass};
use crate::sim::{Mode, SimConfig};

/// Factor on the convergence time used when `t_end` is not given.
pub const DEFAULT_HORIZON: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSection {
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub free_flow_speed: f64,
    pub pressure_exponent: f64,
    pub max_occupancy: f64,
    pub relaxation_time: f64,
    pub vehicle_area: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub cells: usize,
    pub cfl: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub output_stride: usize,
    pub mode: Mode,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            cells: 400,
            cfl: 0.9,
            t_end: None,
            output_stride: 10,
            mode: Mode::ClosedLoop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelConfig::default();
        Self {
            nodes: k.nodes,
            tol: k.tol,
            max_iter: k.max_iter,
        }
    }
}

/// Results appended to a scenario in a run manifest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub lambda: [f64; 4],
    pub delta: f64,
    pub riemann_speeds: [f64; 4],
    pub kappa: f64,
    pub q0: [f64; 3],
    pub r1: [f64; 3],
    pub convergence_time: f64,
    pub t_end: f64,
    pub kernel_iterations: usize,
    pub kernel_residual: f64,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub dt: f64,
    pub steps: usize,
    pub initial_sup_norm: f64,
    pub final_sup_norm: f64,
    pub sup_norm_after_convergence: f64,
    pub l2_norm_at_convergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub road: RoadSection,
    pub class1: ClassSection,
    pub class2: ClassSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
}

/// Validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ModelParams,
    pub densities: [f64; 2],
    pub sim: SimSection,
    pub kernel: KernelConfig,
    pub output_dir: PathBuf,
}

impl Scenario {
    /// Shipped congested benchmark.
    pub fn benchmark() -> Self {
        parse_scenario(BENCHMARK_TOML).expect("shipped benchmark is valid")
    }

    pub fn equilibrium(&self) -> Result<EquilibriumState> {
        EquilibriumState::from_densities(self.densities[0], self.densities[1], &self.params)
    }

    /// Simulation settings for `mode` with the horizon resolved against the
    /// convergence time.
    pub fn sim_config(&self, mode: Mode, t_f: f64) -> SimConfig {
        SimConfig {
            cells: self.sim.cells,
            cfl: self.sim.cfl,
            t_end: self.sim.t_end.unwrap_or(DEFAULT_HORIZON * t_f),
            mode,
            output_stride: self.sim.output_stride,
        }
    }

    pub fn to_file(&self) -> ScenarioFile {
        let class = |c: &VehicleClass, rho: f64| ClassSection {
            free_flow_speed: c.free_flow_speed,
            pressure_exponent: c.pressure_exponent,
            max_occupancy: c.max_occupancy,
            relaxation_time: c.relaxation_time,
            vehicle_area: c.vehicle_area,
            density: rho,
        };
        ScenarioFile {
            output_dir: Some(self.output_dir.to_string_lossy().into_owned()),
            road: RoadSection {
                length: self.params.length,
                width: self.params.road_width,
            },
            class1: class(&self.params.classes[0], self.densities[0]),
            class2: class(&self.params.classes[1], self.densities[1]),
            sim: self.sim.clone(),
            kernel: KernelSection {
                nodes: self.kernel.nodes,
                tol: self.kernel.tol,
                max_iter: self.kernel.max_iter,
            },
            summary: None,
        }
    }

    pub fn to_toml(&self, summary: Option<Summary>) -> String {
        let mut f = self.to_file();
        f.summary = summary;
        toml::to_string(&f).expect("scenario serializes")
    }
}

pub const BENCHMARK_TOML: &str = include_str!("../scenarios/benchmark.toml");

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a scenario, including the congestion requirement
/// of the controller.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    from_file(file)
}

pub fn from_file(f: ScenarioFile) -> Result<Scenario> {
    let class = |c: &ClassSection| VehicleClass {
        free_flow_speed: c.free_flow_speed,
        pressure_exponent: c.pressure_exponent,
        max_occupancy: c.max_occupancy,
        relaxation_time: c.relaxation_time,
        vehicle_area: c.vehicle_area,
    };
    let params = ModelParams::new(class(&f.class1), class(&f.class2), f.road.width, f.road.length)?;
    let s = Scenario {
        params,
        densities: [f.class1.density, f.class2.density],
        sim: f.sim,
        kernel: KernelConfig {
            nodes: f.kernel.nodes,
            tol: f.kernel.tol,
            max_iter: f.kernel.max_iter,
        },
        output_dir: PathBuf::from(f.output_dir.unwrap_or_else(|| "output".into())),
    };

    let eq = s.equilibrium()?;
    let cb = CharacteristicBasis::new(&eq);
    match cb.regime {
        Regime::Congested => {}
        Regime::Degenerate => return Err(Error::Degenerate(cb.speeds)),
        _ => {
            return Err(Error::NotCongested(format!(
                "\u{3bb}\u{2084} = {:+.4} m/s (need exactly one negative speed, got {:?})",
                cb.speeds[3], cb.speeds
            )))
        }
    }

    if let Some(t) = s.sim.t_end {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidConfig(format!("t_end must be positive (got {t})")));
        }
    }
    s.sim_config(s.sim.mode, 1.0).validate()?;
    if s.kernel.nodes < 3 {
        return Err(Error::InvalidConfig(format!(
            "kernel nodes must be at least 3 (got {})",
            s.kernel.nodes
        )));
    }
    if !(s.kernel.tol > 0.0) || s.kernel.max_iter == 0 {
        return Err(Error::InvalidConfig(
            "kernel tol must be positive and max_iter at least 1".into(),
        ));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[road]
length = 1000.0
width = 7.5

[class1]
free_flow_speed = 33.0
pressure_exponent = 2.0
max_occupancy = 0.9
relaxation_time = 30.0
vehicle_area = 10.0
density = 0.26

[class2]
free_flow_speed = 25.0
pressure_exponent = 2.0
max_occupancy = 0.8
relaxation_time = 45.0
vehicle_area = 30.0
density = 0.05
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.sim.cfl, 0.9);
        assert_eq!(s.sim.cells, 400);
        assert_eq!(s.sim.t_end, None);
        assert_eq!(s.kernel.tol, 1e-8);
        assert_eq!(s.kernel.nodes, 201);
        assert_eq!(s.output_dir, PathBuf::from("output"));
        assert_eq!(s.params, ModelParams::benchmark());
        assert_eq!(s.sim_config(Mode::OpenLoop, 200.0).t_end, 300.0);
    }

    #[test]
    fn shipped_benchmark_parses() {
        let s = Scenario::benchmark();
        assert_eq!(s.densities, ModelParams::BENCHMARK_DENSITIES);
    }

    #[test]
    fn bad_exponent_is_reported() {
        let text = MINIMAL.replacen("pressure_exponent = 2.0", "pressure_exponent = 0.5", 1);
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("gamma must exceed 1"), "{err}");
    }

    #[test]
    fn free_flow_is_reported_with_lambda4() {
        let text = MINIMAL
            .replace("density = 0.26", "density = 0.02")
            .replace("density = 0.05", "density = 0.005");
        let err = parse_scenario(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("equilibrium not congested: \u{3bb}\u{2084} = +"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = MINIMAL.replace("width = 7.5", "width = = 7.5");
        match parse_scenario(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("width = 7.5", "width = 7.5\nlanes = 2");
        assert!(matches!(parse_scenario(&text), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn serialized_scenario_round_trips() {
        let mut s = parse_scenario(MINIMAL).unwrap();
        s.sim.t_end = Some(123.5);
        s.sim.mode = Mode::TargetSystem;
        let summary = Summary {
            kappa: 0.5,
            ..Default::default()
        };
        let back = parse_scenario(&s.to_toml(Some(summary))).unwrap();
        assert_eq!(back, s);
    }
}
