//! Flux-splitting upwind scheme in physical perturbation variables.
//!
//! `z_t + A+ D- z + A- D+ z = -B z` with `A+- = Theta Lambda+- Theta^-1`.
//! At each boundary the outgoing characteristic is upwinded and the
//! remaining unknowns follow from the linearized boundary conditions, so the
//! closed loop is a 4x4 solve per step. Used to cross-check the
//! Riemann-coordinate simulator.

use nalgebra::{Matrix4, RowVector4, Vector4, LU, U4};

use super::{relative_norms, time_steps, Frame, FrameData, Mode, SimConfig, SimResult, Series};
use crate::controller::{convergence_time, FeedbackGains};
use crate::error::{Error, Result};
use crate::model::EquilibriumState;
use crate::riemann::RiemannSystem;

#[derive(Debug, Clone)]
pub struct PhysicalSimulator {
    h: f64,
    max_speed: f64,
    a_plus: Matrix4<f64>,
    a_minus: Matrix4<f64>,
    b: Matrix4<f64>,
    theta_inv: Matrix4<f64>,
    /// Columns of `Theta` for the downstream and upstream families.
    downstream: [usize; 3],
    upstream: usize,
    inlet: LU<f64, U4, U4>,
    outlet: LU<f64, U4, U4>,
    feedback: Option<Vec<RowVector4<f64>>>,
    state: Vec<Vector4<f64>>,
    scratch: Vec<Vector4<f64>>,
    time: f64,
    control: f64,
}

impl PhysicalSimulator {
    pub fn new(
        eq: &EquilibriumState,
        rs: &RiemannSystem,
        xs: Vec<f64>,
        gains: Option<&FeedbackGains>,
        psi0: Vec<Vector4<f64>>,
    ) -> Result<Self> {
        if psi0.len() != xs.len() {
            return Err(Error::ShapeMismatch {
                expected: xs.len(),
                got: psi0.len(),
            });
        }
        let slots = rs.slots();
        let speeds = rs.speeds();
        let mut col_speed = [0.0; 4];
        for s in 0..4 {
            col_speed[slots[s]] = speeds[s];
        }
        let theta = *rs.theta();
        let theta_inv = theta
            .try_inverse()
            .ok_or_else(|| Error::IllPosedBoundary("singular eigenvector matrix".into()))?;
        let split = |keep: fn(f64) -> bool| {
            let d = Vector4::from_fn(|i, _| if keep(col_speed[i]) { col_speed[i] } else { 0.0 });
            theta * Matrix4::from_diagonal(&d) * theta_inv
        };
        let a_plus = split(|l| l > 0.0);
        let a_minus = split(|l| l < 0.0);
        let flow = eq.flow_row();
        let downstream = [slots[0], slots[1], slots[2]];
        let upstream = slots[3];

        let mut m0 = Matrix4::zeros();
        m0[(0, 0)] = 1.0;
        m0[(1, 2)] = 1.0;
        m0.set_row(2, &flow);
        m0.set_row(3, &theta_inv.row(upstream));

        let feedback = match gains {
            None => None,
            Some(g) => {
                if g.nodes().len() != xs.len() {
                    return Err(Error::ShapeMismatch {
                        expected: xs.len(),
                        got: g.nodes().len(),
                    });
                }
                Some((0..xs.len()).map(|m| g.row(m)).collect::<Vec<_>>())
            }
        };
        let mut ml = Matrix4::zeros();
        for (r, &c) in downstream.iter().enumerate() {
            ml.set_row(r, &theta_inv.row(c));
        }
        let last = match &feedback {
            Some(rows) => flow - rows[xs.len() - 1],
            None => flow,
        };
        ml.set_row(3, &last);

        let inlet = m0.lu();
        let outlet = ml.lu();
        if inlet.determinant().abs() < 1e-14 || outlet.determinant().abs() < 1e-14 {
            return Err(Error::IllPosedBoundary(
                "boundary rows do not determine the boundary state".into(),
            ));
        }
        let h = xs[1] - xs[0];
        let n = xs.len();
        let mut sim = Self {
            h,
            max_speed: speeds.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            a_plus,
            a_minus,
            b: eq.relaxation_matrix(),
            theta_inv,
            downstream,
            upstream,
            inlet,
            outlet,
            feedback,
            state: psi0,
            scratch: vec![Vector4::zeros(); n],
            time: 0.0,
            control: 0.0,
        };
        sim.control = match &sim.feedback {
            Some(rows) => rows.iter().zip(&sim.state).map(|(r, z)| (r * z)[0]).sum(),
            None => 0.0,
        };
        Ok(sim)
    }

    pub fn state(&self) -> &[Vector4<f64>] {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn control(&self) -> f64 {
        self.control
    }

    pub fn max_dt(&self) -> f64 {
        self.h / self.max_speed
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let courant = dt / self.max_dt();
        if courant > 1.0 + 1e-12 {
            return Err(Error::Cfl { courant });
        }
        let r = dt / self.h;
        let z = &self.state;
        let n = z.len() - 1;
        for m in 0..=n {
            let mut v = z[m] - self.b * z[m] * dt;
            if m > 0 {
                v -= self.a_plus * (z[m] - z[m - 1]) * r;
            }
            if m < n {
                v -= self.a_minus * (z[m + 1] - z[m]) * r;
            }
            self.scratch[m] = v;
        }

        let y_out = (self.theta_inv.row(self.upstream) * self.scratch[0])[0];
        self.scratch[0] = self
            .inlet
            .solve(&Vector4::new(0.0, 0.0, 0.0, y_out))
            .expect("checked at construction");

        let mut rhs = Vector4::zeros();
        for (k, &c) in self.downstream.iter().enumerate() {
            rhs[k] = (self.theta_inv.row(c) * self.scratch[n])[0];
        }
        if let Some(rows) = &self.feedback {
            rhs[3] = rows[..n]
                .iter()
                .zip(&self.scratch[..n])
                .map(|(r, z)| (r * z)[0])
                .sum();
        }
        self.scratch[n] = self.outlet.solve(&rhs).expect("checked at construction");
        self.control = match &self.feedback {
            Some(rows) => rows.iter().zip(&self.scratch).map(|(r, z)| (r * z)[0]).sum(),
            None => 0.0,
        };
        std::mem::swap(&mut self.state, &mut self.scratch);
        self.time += dt;
        Ok(())
    }
}

/// Same protocol as [`super::run`] for the open and closed loop.
pub fn run(
    cfg: &SimConfig,
    eq: &EquilibriumState,
    rs: &RiemannSystem,
    gains: Option<&FeedbackGains>,
) -> Result<SimResult> {
    cfg.validate()?;
    let gains = match cfg.mode {
        Mode::OpenLoop => None,
        Mode::ClosedLoop => Some(gains.ok_or_else(|| {
            Error::InvalidConfig("closed-loop mode needs feedback gains".into())
        })?),
        Mode::TargetSystem => {
            return Err(Error::InvalidConfig(
                "the physical simulator has no target mode".into(),
            ))
        }
    };
    let l = rs.length();
    let xs = cfg.nodes(l);
    let psi0 = super::initial_perturbation(eq, &xs, l);
    let mut sim = PhysicalSimulator::new(eq, rs, xs.clone(), gains, psi0)?;
    let (dt, steps) = time_steps(sim.max_dt(), cfg.cfl, super::source_norm(rs, &xs), cfg.t_end);
    let mut series = Series::default();
    series.push(0.0, sim.control(), relative_norms(eq, &xs, sim.state()), f64::NAN);
    let mut frames = vec![Frame {
        t: 0.0,
        data: FrameData::Physical(sim.state().to_vec()),
    }];
    for n in 1..=steps {
        let step = if n == steps { cfg.t_end - dt * (steps - 1) as f64 } else { dt };
        sim.step(step)?;
        series.push(sim.time(), sim.control(), relative_norms(eq, &xs, sim.state()), f64::NAN);
        if n % cfg.output_stride == 0 || n == steps {
            frames.push(Frame {
                t: sim.time(),
                data: FrameData::Physical(sim.state().to_vec()),
            });
        }
    }
    Ok(SimResult {
        mode: cfg.mode,
        xs,
        dt,
        t_f: convergence_time(rs),
        frames,
        series,
    })
}
