//! Time-domain simulation of the linearized model in Riemann coordinates.
//!
//! Each component is upwinded in the unscaled diagonal variable
//! `y_i = exp(c_i x) w_i`, which makes the scheme identical node by node to
//! flux-splitting upwind in physical variables (see [`physical`]). The
//! outlet value closes the loop implicitly, since the control integral
//! includes `w4(L)` itself.

pub mod physical;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, RowVector4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::controller::{trapezoid_weights, BacksteppingTransform, FeedbackGains};
use crate::error::{Error, Result};
use crate::model::EquilibriumState;
use crate::riemann::RiemannSystem;

/// Upper bound on `dt max|Sigma|`; larger steps are halved.
pub const MAX_SOURCE_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "open")]
    OpenLoop,
    #[serde(rename = "closed")]
    ClosedLoop,
    #[serde(rename = "target")]
    TargetSystem,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OpenLoop => "open",
            Mode::ClosedLoop => "closed",
            Mode::TargetSystem => "target",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Mode::OpenLoop),
            "closed" => Ok(Mode::ClosedLoop),
            "target" => Ok(Mode::TargetSystem),
            _ => Err(Error::InvalidConfig(format!(
                "unknown mode '{s}' (expected open, closed or target)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cells: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub mode: Mode,
    pub output_stride: usize,
}

impl SimConfig {
    pub const MIN_CELLS: usize = 32;

    pub fn validate(&self) -> Result<()> {
        if self.cells < Self::MIN_CELLS {
            return Err(Error::InvalidConfig(format!(
                "need at least {} cells (got {})",
                Self::MIN_CELLS,
                self.cells
            )));
        }
        if !(self.cfl > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cfl must be positive (got {})",
                self.cfl
            )));
        }
        if self.cfl > 1.0 {
            return Err(Error::Cfl { courant: self.cfl });
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "t_end must be positive (got {})",
                self.t_end
            )));
        }
        if self.output_stride == 0 {
            return Err(Error::InvalidConfig("output_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Node coordinates for a track of length `l`.
    pub fn nodes(&self, l: f64) -> Vec<f64> {
        uniform_nodes(self.cells, l)
    }
}

pub fn uniform_nodes(cells: usize, l: f64) -> Vec<f64> {
    let h = l / cells as f64;
    (0..=cells)
        .map(|i| if i == cells { l } else { i as f64 * h })
        .collect()
}

/// Stop-and-go profile `rho_i* (1 + s/4)`, `v_i* (1 - s/4)`,
/// `s = sin(4 pi x / L)`, as absolute states `(rho1, v1, rho2, v2)`.
pub fn initial_profiles(eq: &EquilibriumState, xs: &[f64], l: f64) -> Vec<Vector4<f64>> {
    let zs = eq.state_vector();
    xs.iter()
        .map(|&x| {
            let s = 0.25 * (4.0 * std::f64::consts::PI * x / l).sin();
            Vector4::new(zs[0] * (1.0 + s), zs[1] * (1.0 - s), zs[2] * (1.0 + s), zs[3] * (1.0 - s))
        })
        .collect()
}

/// Perturbation `Psi = z - z*` of [`initial_profiles`].
pub fn initial_perturbation(eq: &EquilibriumState, xs: &[f64], l: f64) -> Vec<Vector4<f64>> {
    let zs = eq.state_vector();
    initial_profiles(eq, xs, l).into_iter().map(|z| z - zs).collect()
}

/// Sup and RMS norms of perturbations relative to the equilibrium.
pub fn relative_norms(eq: &EquilibriumState, xs: &[f64], psi: &[Vector4<f64>]) -> (f64, f64) {
    let zs = eq.state_vector();
    let rel: Vec<f64> = psi
        .iter()
        .map(|p| (0..4).map(|c| (p[c] / zs[c]).powi(2)).sum::<f64>())
        .collect();
    let sup = psi
        .iter()
        .flat_map(|p| (0..4).map(move |c| (p[c] / zs[c]).abs()))
        .fold(0.0_f64, f64::max);
    (sup, rms(xs, &rel))
}

/// `sqrt(1/L int f dx)` of sampled squares `f`.
fn rms(xs: &[f64], squares: &[f64]) -> f64 {
    let l = xs[xs.len() - 1] - xs[0];
    let w = trapezoid_weights(xs);
    (w.iter().zip(squares).map(|(w, f)| w * f).sum::<f64>() / l).sqrt()
}

pub fn scalar_norms(xs: &[f64], f: &[f64]) -> (f64, f64) {
    let sup = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    (sup, rms(xs, &sq))
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameData {
    /// Physical perturbations `(rho1~, v1~, rho2~, v2~)`.
    Physical(Vec<Vector4<f64>>),
    /// Target state `beta`.
    Beta(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub data: FrameData,
}

/// Scalar diagnostics recorded every step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub control: Vec<f64>,
    pub sup_norm: Vec<f64>,
    pub l2_norm: Vec<f64>,
    pub beta_outlet: Vec<f64>,
}

impl Series {
    fn push(&mut self, t: f64, u: f64, (sup, l2): (f64, f64), beta: f64) {
        self.t.push(t);
        self.control.push(u);
        self.sup_norm.push(sup);
        self.l2_norm.push(l2);
        self.beta_outlet.push(beta);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index of the last sample with `t <= at`.
    pub fn index_at(&self, at: f64) -> Option<usize> {
        self.t.iter().rposition(|&t| t <= at + 1e-9 * at.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub mode: Mode,
    pub xs: Vec<f64>,
    pub dt: f64,
    pub t_f: f64,
    pub frames: Vec<Frame>,
    pub series: Series,
}

impl SimResult {
    pub fn final_sup_norm(&self) -> f64 {
        *self.series.sup_norm.last().expect("at least the initial sample")
    }
}

/// Per-step update coefficients for one time step size.
#[derive(Debug, Clone)]
struct Stencil {
    dt: f64,
    center: [f64; 4],
    upwind: [f64; 4],
    source: Vec<Matrix4<f64>>,
}

impl Stencil {
    fn new(rs: &RiemannSystem, xs: &[f64], h: f64, dt: f64) -> Self {
        let s = rs.speeds();
        let c = rs.decay_rates();
        let j = rs.coupling();
        let center = std::array::from_fn(|i| 1.0 - s[i].abs() * dt / h + dt * j[(i, i)]);
        let upwind = std::array::from_fn(|i| {
            let nu = s[i].abs() * dt / h;
            if i < 3 {
                nu * (-c[i] * h).exp()
            } else {
                nu * (c[i] * h).exp()
            }
        });
        let source = xs.iter().map(|&x| rs.sigma(x) * dt).collect();
        Self {
            dt,
            center,
            upwind,
            source,
        }
    }

    /// Interior update of every node; boundary values are overwritten later.
    fn apply(&self, w: &[Vector4<f64>], out: &mut [Vector4<f64>]) {
        let n = w.len() - 1;
        for m in 0..=n {
            let mut v = self.source[m] * w[m];
            for i in 0..4 {
                v[i] += self.center[i] * w[m][i];
            }
            if m > 0 {
                for i in 0..3 {
                    v[i] += self.upwind[i] * w[m - 1][i];
                }
            }
            if m < n {
                v[3] += self.upwind[3] * w[m + 1][3];
            }
            out[m] = v;
        }
    }
}

/// Explicit upwind integrator for the Riemann system.
#[derive(Debug, Clone)]
pub struct RiemannSimulator<'a> {
    rs: &'a RiemannSystem,
    xs: Vec<f64>,
    h: f64,
    /// Feedback rows acting on `w`, `U = sum_m rows[m] w_m`.
    feedback: Option<Vec<RowVector4<f64>>>,
    state: Vec<Vector4<f64>>,
    scratch: Vec<Vector4<f64>>,
    stencil: Option<Stencil>,
    time: f64,
    control: f64,
}

impl<'a> RiemannSimulator<'a> {
    pub fn new(
        rs: &'a RiemannSystem,
        xs: Vec<f64>,
        gains: Option<&FeedbackGains>,
        w0: Vec<Vector4<f64>>,
    ) -> Result<Self> {
        if w0.len() != xs.len() {
            return Err(Error::ShapeMismatch {
                expected: xs.len(),
                got: w0.len(),
            });
        }
        let h = xs[1] - xs[0];
        let feedback = match gains {
            None => None,
            Some(g) => {
                if g.nodes().len() != xs.len() {
                    return Err(Error::ShapeMismatch {
                        expected: xs.len(),
                        got: g.nodes().len(),
                    });
                }
                Some(
                    xs.iter()
                        .enumerate()
                        .map(|(m, &x)| g.row(m) * rs.from_riemann_matrix(x))
                        .collect(),
                )
            }
        };
        let n = xs.len();
        let mut sim = Self {
            rs,
            xs,
            h,
            feedback,
            state: w0,
            scratch: vec![Vector4::zeros(); n],
            stencil: None,
            time: 0.0,
            control: 0.0,
        };
        sim.control = sim.current_control();
        Ok(sim)
    }

    pub fn state(&self) -> &[Vector4<f64>] {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Input `U` applied at the last step, or demanded by the current state
    /// before the first step.
    pub fn control(&self) -> f64 {
        self.control
    }

    fn current_control(&self) -> f64 {
        match &self.feedback {
            None => 0.0,
            Some(rows) => rows.iter().zip(&self.state).map(|(r, w)| (r * w)[0]).sum(),
        }
    }

    /// Largest stable step.
    pub fn max_dt(&self) -> f64 {
        let s = self.rs.speeds();
        self.h / s.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let courant = dt / self.max_dt();
        if courant > 1.0 + 1e-12 {
            return Err(Error::Cfl { courant });
        }
        if self.stencil.as_ref().map(|s| s.dt) != Some(dt) {
            self.stencil = Some(Stencil::new(self.rs, &self.xs, self.h, dt));
        }
        let stencil = self.stencil.as_ref().expect("just built");
        stencil.apply(&self.state, &mut self.scratch);

        let n = self.xs.len() - 1;
        let q0 = self.rs.q0_bar();
        let w4_in = self.scratch[0][3];
        for i in 0..3 {
            self.scratch[0][i] = q0[i] * w4_in;
        }

        let w_out: Vector3<f64> = self.scratch[n].fixed_rows::<3>(0).into_owned();
        let r1w = (self.rs.r1_bar() * w_out)[0];
        match &self.feedback {
            None => {
                self.scratch[n][3] = r1w;
                self.control = 0.0;
            }
            Some(rows) => {
                let a = self.rs.input_scale();
                self.scratch[n][3] = 0.0;
                let rest: f64 = rows.iter().zip(&self.scratch).map(|(r, w)| (r * w)[0]).sum();
                let own = rows[n][3];
                let w4 = (r1w + a * rest) / (1.0 - a * own);
                self.scratch[n][3] = w4;
                self.control = rest + own * w4;
            }
        }
        std::mem::swap(&mut self.state, &mut self.scratch);
        self.time += dt;
        Ok(())
    }
}

/// Step size and count covering `[0, t_end]` exactly.
pub fn time_steps(max_dt: f64, cfl: f64, source_norm: f64, t_end: f64) -> (f64, usize) {
    let mut dt = cfl * max_dt;
    while dt * source_norm > MAX_SOURCE_STEP {
        dt *= 0.5;
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    (dt, steps)
}

fn source_norm(rs: &RiemannSystem, xs: &[f64]) -> f64 {
    let j = rs.coupling();
    let diag = (0..4).fold(0.0_f64, |m, i| m.max(j[(i, i)].abs()));
    xs.iter()
        .map(|&x| {
            let s = rs.sigma(x);
            (0..4)
                .map(|r| s.row(r).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0_f64, f64::max)
        })
        .fold(diag, f64::max)
}

/// Runs one simulation from the stop-and-go initial profile.
///
/// `gains` must be given for [`Mode::ClosedLoop`] and `transform` for
/// [`Mode::TargetSystem`]; when `transform` is present the outlet value of
/// `beta` is recorded in every mode.
pub fn run(
    cfg: &SimConfig,
    eq: &EquilibriumState,
    rs: &RiemannSystem,
    gains: Option<&FeedbackGains>,
    transform: Option<&BacksteppingTransform>,
) -> Result<SimResult> {
    cfg.validate()?;
    let l = rs.length();
    let xs = cfg.nodes(l);
    let psi0 = initial_perturbation(eq, &xs, l);
    let w0 = rs.to_riemann(&xs, &psi0)?;
    if let Some(t) = transform {
        if t.nodes().len() != xs.len() {
            return Err(Error::ShapeMismatch {
                expected: xs.len(),
                got: t.nodes().len(),
            });
        }
    }
    let t_f = crate::controller::convergence_time(rs);
    match cfg.mode {
        Mode::TargetSystem => {
            let t = transform.ok_or_else(|| {
                Error::InvalidConfig("target mode needs the backstepping transform".into())
            })?;
            let beta0 = t.beta(&w0)?;
            Ok(run_target(cfg, rs, xs, beta0, t_f))
        }
        Mode::OpenLoop | Mode::ClosedLoop => {
            let g = match cfg.mode {
                Mode::ClosedLoop => Some(gains.ok_or_else(|| {
                    Error::InvalidConfig("closed-loop mode needs feedback gains".into())
                })?),
                _ => None,
            };
            let mut sim = RiemannSimulator::new(rs, xs.clone(), g, w0)?;
            let (dt, steps) = time_steps(sim.max_dt(), cfg.cfl, source_norm(rs, &xs), cfg.t_end);
            let mut series = Series::default();
            let mut frames = Vec::new();
            let record = |sim: &RiemannSimulator, series: &mut Series| -> Result<Vec<Vector4<f64>>> {
                let psi = rs.from_riemann(&xs, sim.state())?;
                let beta = match transform {
                    Some(t) => t.beta_at_outlet(sim.state())?,
                    None => f64::NAN,
                };
                series.push(sim.time(), sim.control(), relative_norms(eq, &xs, &psi), beta);
                Ok(psi)
            };
            let psi = record(&sim, &mut series)?;
            frames.push(Frame {
                t: 0.0,
                data: FrameData::Physical(psi),
            });
            for n in 1..=steps {
                let step = if n == steps { cfg.t_end - dt * (steps - 1) as f64 } else { dt };
                sim.step(step)?;
                let psi = record(&sim, &mut series)?;
                if n % cfg.output_stride == 0 || n == steps {
                    frames.push(Frame {
                        t: sim.time(),
                        data: FrameData::Physical(psi),
                    });
                }
            }
            Ok(SimResult {
                mode: cfg.mode,
                xs,
                dt,
                t_f,
                frames,
                series,
            })
        }
    }
}

/// Upwind transport of `beta` alone with zero outlet value.
fn run_target(cfg: &SimConfig, rs: &RiemannSystem, xs: Vec<f64>, beta0: Vec<f64>, t_f: f64) -> SimResult {
    let mu = -rs.speeds()[3];
    let h = xs[1] - xs[0];
    let (dt, steps) = time_steps(h / mu, cfg.cfl, 0.0, cfg.t_end);
    let n = xs.len() - 1;
    let mut beta = beta0;
    let mut next = beta.clone();
    let mut series = Series::default();
    let mut frames = vec![Frame {
        t: 0.0,
        data: FrameData::Beta(beta.clone()),
    }];
    series.push(0.0, 0.0, scalar_norms(&xs, &beta), beta[n]);
    let mut t = 0.0;
    for s in 1..=steps {
        let step = if s == steps { cfg.t_end - dt * (steps - 1) as f64 } else { dt };
        let nu = mu * step / h;
        for m in 0..n {
            next[m] = (1.0 - nu) * beta[m] + nu * beta[m + 1];
        }
        next[n] = 0.0;
        std::mem::swap(&mut beta, &mut next);
        t = if s == steps { cfg.t_end } else { t + step };
        series.push(t, 0.0, scalar_norms(&xs, &beta), beta[n]);
        if s % cfg.output_stride == 0 || s == steps {
            frames.push(Frame {
                t,
                data: FrameData::Beta(beta.clone()),
            });
        }
    }
    SimResult {
        mode: Mode::TargetSystem,
        xs,
        dt,
        t_f,
        frames,
        series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CharacteristicBasis, ModelParams};

    fn benchmark() -> (EquilibriumState, RiemannSystem) {
        let p = ModelParams::benchmark();
        let [r1, r2] = ModelParams::BENCHMARK_DENSITIES;
        let eq = EquilibriumState::from_densities(r1, r2, &p).unwrap();
        let cb = CharacteristicBasis::new(&eq);
        let rs = RiemannSystem::build(&eq, &cb, p.length).unwrap();
        (eq, rs)
    }

    #[test]
    fn initial_profile_examples() {
        let (eq, _) = benchmark();
        let xs = [0.0, 125.0];
        let z = initial_profiles(&eq, &xs, 1000.0);
        assert_eq!(z[0], eq.state_vector());
        let zs = eq.state_vector();
        for c in 0..4 {
            let f = if c % 2 == 0 { 1.25 } else { 0.75 };
            assert!((z[1][c] - f * zs[c]).abs() < 1e-14 * zs[c]);
        }
        let xs = uniform_nodes(400, 1000.0);
        let z = initial_profiles(&eq, &xs, 1000.0);
        let w = trapezoid_weights(&xs);
        let mean: f64 = z.iter().zip(&w).map(|(z, w)| z[0] * w).sum::<f64>() / 1000.0;
        assert!((mean - zs[0]).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig {
            cells: 64,
            cfl: 0.9,
            t_end: 10.0,
            mode: Mode::OpenLoop,
            output_stride: 1,
        };
        assert!(cfg.validate().is_ok());
        cfg.cfl = 1.2;
        assert!(matches!(cfg.validate(), Err(Error::Cfl { .. })));
        cfg.cfl = 0.9;
        cfg.cells = 16;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        assert_eq!("closed".parse::<Mode>().unwrap(), Mode::ClosedLoop);
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let (_, rs) = benchmark();
        let xs = uniform_nodes(64, rs.length());
        let mut sim = RiemannSimulator::new(&rs, xs.clone(), None, vec![Vector4::zeros(); 65]).unwrap();
        let dt = 0.9 * sim.max_dt();
        for _ in 0..50 {
            sim.step(dt).unwrap();
        }
        assert!(sim.state().iter().all(|w| w.amax() == 0.0));
        assert!(matches!(sim.step(1.5 * sim.max_dt()), Err(Error::Cfl { .. })));
    }

    #[test]
    fn time_steps_end_exactly() {
        let (dt, n) = time_steps(1.0, 0.9, 0.0, 10.0);
        assert_eq!(dt, 0.9);
        assert_eq!(n, 12);
        let (dt, n) = time_steps(1.0, 1.0, 0.0, 10.0);
        assert_eq!((dt, n), (1.0, 10));
        let (dt, _) = time_steps(1.0, 1.0, 2.0, 10.0);
        assert_eq!(dt, 0.25);
    }
}
