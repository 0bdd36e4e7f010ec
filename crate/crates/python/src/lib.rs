//! Python bindings: scenarios, controller design and simulation runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use twoclass_ar::kernel::kernel_residual;
use twoclass_ar::model::characteristic_speeds as speeds;
use twoclass_ar::pipeline::{run_scenario, run_summary, RunOptions};
use twoclass_ar::scenario::parse_scenario;
use twoclass_ar::sim::FrameData;
use twoclass_ar::{Design, EquilibriumState, Error, Mode};

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyOSError::new_err(e.to_string())
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(to_py)
}

/// Parsed and validated scenario.
#[pyclass(name = "Scenario", module = "twoclass_ar")]
struct PyScenario {
    inner: twoclass_ar::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn benchmark() -> Self {
        Self {
            inner: twoclass_ar::Scenario::benchmark(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        parse_scenario(text).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| to_py(e.into()))?;
        Self::from_toml(&text)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml(None)
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.params.length
    }

    #[getter]
    fn densities(&self) -> (f64, f64) {
        (self.inner.densities[0], self.inner.densities[1])
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.sim.cells
    }

    #[setter]
    fn set_cells(&mut self, cells: usize) {
        self.inner.sim.cells = cells;
    }

    #[getter]
    fn kernel_nodes(&self) -> usize {
        self.inner.kernel.nodes
    }

    #[setter]
    fn set_kernel_nodes(&mut self, nodes: usize) {
        self.inner.kernel.nodes = nodes;
    }

    /// Runs the listed modes and writes the output files; returns the
    /// summary as a TOML string.
    #[pyo3(signature = (out_dir, modes = vec!["closed".to_string()], dump_kernels = false))]
    fn run(&self, py: Python<'_>, out_dir: PathBuf, modes: Vec<String>, dump_kernels: bool) -> PyResult<String> {
        let opts = RunOptions {
            modes: modes.iter().map(|m| parse_mode(m)).collect::<PyResult<_>>()?,
            output_dir: Some(out_dir),
            dump_kernels,
            ..RunOptions::default()
        };
        let s = &self.inner;
        let rep = py.detach(|| run_scenario(s, &opts)).map_err(to_py)?;
        Ok(s.to_toml(Some(rep.summary)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(length={}, densities=({}, {}), cells={}, kernel_nodes={})",
            self.inner.params.length,
            self.inner.densities[0],
            self.inner.densities[1],
            self.inner.sim.cells,
            self.inner.kernel.nodes
        )
    }
}

/// Equilibrium, Riemann system and backstepping kernels of a scenario.
#[pyclass(name = "Design", module = "twoclass_ar")]
struct PyDesign {
    inner: Design,
    scenario: twoclass_ar::Scenario,
}

#[pymethods]
impl PyDesign {
    #[new]
    fn new(py: Python<'_>, scenario: &PyScenario) -> PyResult<Self> {
        let s = scenario.inner.clone();
        let inner = py
            .detach(|| Design::build(&s.params, s.densities, &s.kernel))
            .map_err(to_py)?;
        Ok(Self { inner, scenario: s })
    }

    /// Characteristic speeds `(v1*, v2*, lambda3, lambda4)`.
    #[getter]
    fn speeds(&self) -> [f64; 4] {
        self.inner.basis.speeds
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.riemann.kappa()
    }

    #[getter]
    fn q0(&self) -> [f64; 3] {
        self.inner.riemann.q0_bar().into()
    }

    #[getter]
    fn r1(&self) -> [f64; 3] {
        let r = self.inner.riemann.r1_bar();
        [r[0], r[1], r[2]]
    }

    #[getter]
    fn convergence_time(&self) -> f64 {
        self.inner.convergence_time()
    }

    #[getter]
    fn kernel_iterations(&self) -> usize {
        self.inner.kernels.iterations()
    }

    #[getter]
    fn kernel_residual(&self) -> f64 {
        kernel_residual(&self.inner.riemann, &self.inner.kernels).max()
    }

    /// `(K(x, xi), L(x, xi))` by linear interpolation on the kernel grid.
    fn kernel(&self, x: f64, xi: f64) -> PyResult<([f64; 3], f64)> {
        let l = self.inner.params.length;
        if !(0.0..=l).contains(&xi) || !(xi..=l).contains(&x) {
            return Err(PyValueError::new_err(format!(
                "need 0 <= xi <= x <= {l} (got x={x}, xi={xi})"
            )));
        }
        let (k, lv) = self.inner.kernels.eval(x, xi);
        Ok(([k[0], k[1], k[2]], lv))
    }

    /// Simulates one mode and returns a dict of lists: `t`, `control`,
    /// `sup_norm`, `l2_norm`, `beta_outlet`, `x`, `frame_t` and `frames`
    /// (physical perturbations per node, or `beta` in target mode).
    #[pyo3(signature = (mode = "closed", cells = None, cfl = None, t_end = None, output_stride = None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        mode: &str,
        cells: Option<usize>,
        cfl: Option<f64>,
        t_end: Option<f64>,
        output_stride: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut cfg = self
            .scenario
            .sim_config(parse_mode(mode)?, self.inner.convergence_time());
        cfg.cells = cells.unwrap_or(cfg.cells);
        cfg.cfl = cfl.unwrap_or(cfg.cfl);
        cfg.t_end = t_end.unwrap_or(cfg.t_end);
        cfg.output_stride = output_stride.unwrap_or(cfg.output_stride);
        let d = &self.inner;
        let r = py.detach(|| d.simulate(&cfg)).map_err(to_py)?;

        let out = PyDict::new(py);
        let s = &r.series;
        out.set_item("t", s.t.clone())?;
        out.set_item("control", s.control.clone())?;
        out.set_item("sup_norm", s.sup_norm.clone())?;
        out.set_item("l2_norm", s.l2_norm.clone())?;
        out.set_item("beta_outlet", s.beta_outlet.clone())?;
        out.set_item("x", r.xs.clone())?;
        out.set_item("dt", r.dt)?;
        out.set_item("t_f", r.t_f)?;
        out.set_item("frame_t", r.frames.iter().map(|f| f.t).collect::<Vec<_>>())?;
        let frames: Vec<Vec<Vec<f64>>> = r
            .frames
            .iter()
            .map(|f| match &f.data {
                FrameData::Physical(p) => p.iter().map(|z| z.iter().copied().collect()).collect(),
                FrameData::Beta(b) => b.iter().map(|v| vec![*v]).collect(),
            })
            .collect();
        out.set_item("frames", frames)?;
        let summary = run_summary(&r);
        out.set_item("sup_norm_after_convergence", summary.sup_norm_after_convergence)?;
        out.set_item("l2_norm_at_convergence", summary.l2_norm_at_convergence)?;
        Ok(out)
    }
}

/// Closed-form characteristic speeds at an equilibrium of a scenario's
/// parameters.
#[pyfunction]
fn characteristic_speeds(scenario: &PyScenario, rho1: f64, rho2: f64) -> PyResult<[f64; 4]> {
    let eq = EquilibriumState::linearize(rho1, rho2, &scenario.inner.params).map_err(to_py)?;
    Ok(speeds(&eq).0)
}

#[pymodule]
#[pyo3(name = "twoclass_ar")]
fn twoclass_ar_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(characteristic_speeds, m)?)?;
    Ok(())
}
