//! Two-class Aw-Rascle traffic model.
//!
//! The nonlinear model couples the two vehicle classes through the area
//! occupancy `AO = (a1 rho1 + a2 rho2) / W`. Each class feels a traffic
//! pressure `p_i(AO) = V_i (AO / AObar_i)^gamma_i` and relaxes towards the
//! equilibrium speed `V_e,i(AO) = V_i - p_i(AO)`.
//!
//! Around a constant steady state `z* = (rho1*, v1*, rho2*, v2*)` the
//! perturbation `z = (rho1~, v1~, rho2~, v2~)` obeys
//!
//! ```text
//! Jt z_t + Jx z_x + J z = 0
//! ```
//!
//! whose characteristic speeds (eigenvalues of `Jt^-1 Jx`) decide between
//! free-flow and congested traffic.

use nalgebra::{Matrix2, Matrix4, RowVector4, Vector4, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues closer than this fraction of the largest speed are repeated.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Equilibria must keep this margin below the smallest jam occupancy.
pub const OCCUPANCY_MARGIN: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::One, Class::Two];

    pub fn index(self) -> usize {
        match self {
            Class::One => 0,
            Class::Two => 1,
        }
    }
}

/// Physical constants of one vehicle class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleClass {
    /// Free-flow speed `V_i` [m/s].
    pub free_flow_speed: f64,
    /// Pressure exponent `gamma_i`, must exceed 1.
    pub pressure_exponent: f64,
    /// Jam occupancy `AObar_i` in (0, 1).
    pub max_occupancy: f64,
    /// Adaptation time `tau_i` [s]. May be infinite (no relaxation).
    pub relaxation_time: f64,
    /// Road surface covered by one vehicle `a_i` [m^2].
    pub vehicle_area: f64,
}

impl VehicleClass {
    fn validate(&self, label: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("{label}: {msg}")));
        if !(self.free_flow_speed > 0.0) || !self.free_flow_speed.is_finite() {
            return bad(format!(
                "free-flow speed must be positive (got {})",
                self.free_flow_speed
            ));
        }
        if !(self.pressure_exponent > 1.0) || !self.pressure_exponent.is_finite() {
            return bad(format!(
                "gamma must exceed 1 (got {})",
                self.pressure_exponent
            ));
        }
        if !(self.max_occupancy > 0.0 && self.max_occupancy < 1.0) {
            return bad(format!(
                "maximum occupancy must lie in (0, 1) (got {})",
                self.max_occupancy
            ));
        }
        if !(self.relaxation_time > 0.0) {
            return bad(format!(
                "relaxation time must be positive (got {})",
                self.relaxation_time
            ));
        }
        if !(self.vehicle_area > 0.0) || !self.vehicle_area.is_finite() {
            return bad(format!(
                "vehicle area must be positive (got {})",
                self.vehicle_area
            ));
        }
        Ok(())
    }
}

/// Constants of both classes and of the road segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub classes: [VehicleClass; 2],
    /// Road width `W` [m].
    pub road_width: f64,
    /// Track length `L` [m].
    pub length: f64,
}

impl ModelParams {
    pub fn new(
        class1: VehicleClass,
        class2: VehicleClass,
        road_width: f64,
        length: f64,
    ) -> Result<Self> {
        let p = Self {
            classes: [class1, class2],
            road_width,
            length,
        };
        p.validate()?;
        Ok(p)
    }

    /// Congested benchmark: passenger cars (class 1) and trucks (class 2) on a
    /// 1 km two-lane segment.
    pub fn benchmark() -> Self {
        Self {
            classes: [
                VehicleClass {
                    free_flow_speed: 33.0,
                    pressure_exponent: 2.0,
                    max_occupancy: 0.9,
                    relaxation_time: 30.0,
                    vehicle_area: 10.0,
                },
                VehicleClass {
                    free_flow_speed: 25.0,
                    pressure_exponent: 2.0,
                    max_occupancy: 0.8,
                    relaxation_time: 45.0,
                    vehicle_area: 30.0,
                },
            ],
            road_width: 7.5,
            length: 1000.0,
        }
    }

    /// Equilibrium densities `(rho1*, rho2*)` [veh/m] paired with
    /// [`ModelParams::benchmark`].
    pub const BENCHMARK_DENSITIES: [f64; 2] = [0.26, 0.05];

    pub fn validate(&self) -> Result<()> {
        self.classes[0].validate("class 1")?;
        self.classes[1].validate("class 2")?;
        if !(self.road_width > 0.0) || !self.road_width.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "road width must be positive (got {})",
                self.road_width
            )));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "track length must be positive (got {})",
                self.length
            )));
        }
        Ok(())
    }

    pub fn class(&self, c: Class) -> &VehicleClass {
        &self.classes[c.index()]
    }

    /// Fraction of the road surface covered by both classes.
    pub fn area_occupancy(&self, rho1: f64, rho2: f64) -> Result<f64> {
        if !(rho1 >= 0.0) || !(rho2 >= 0.0) {
            return Err(Error::Domain(format!(
                "densities must be non-negative (got {rho1}, {rho2})"
            )));
        }
        Ok((self.classes[0].vehicle_area * rho1 + self.classes[1].vehicle_area * rho2)
            / self.road_width)
    }

    pub fn pressure(&self, ao: f64, c: Class) -> Result<f64> {
        if !(ao >= 0.0) {
            return Err(Error::Domain(format!(
                "area occupancy must be non-negative (got {ao})"
            )));
        }
        let k = self.class(c);
        Ok(k.free_flow_speed * (ao / k.max_occupancy).powf(k.pressure_exponent))
    }

    pub fn equilibrium_speed(&self, ao: f64, c: Class) -> Result<f64> {
        Ok(self.class(c).free_flow_speed - self.pressure(ao, c)?)
    }

    /// `d p_i / d rho_j` at the given densities.
    pub fn pressure_sensitivity(&self, rho1: f64, rho2: f64) -> Result<Matrix2<f64>> {
        let ao = self.area_occupancy(rho1, rho2)?;
        let w = self.road_width;
        Ok(Matrix2::from_fn(|i, j| {
            let k = &self.classes[i];
            // V_i gamma_i (AO/AObar_i)^(gamma_i - 1) / AObar_i * dAO/drho_j
            k.free_flow_speed * k.pressure_exponent * (ao / k.max_occupancy).powf(k.pressure_exponent - 1.0)
                / k.max_occupancy
                * self.classes[j].vehicle_area
                / w
        }))
    }
}

/// Steady state with the Jacobians of the linearized model.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    pub density: [f64; 2],
    pub velocity: [f64; 2],
    pub occupancy: f64,
    /// `beta[(i, j)] = d p_i / d rho_j` at the equilibrium.
    pub beta: Matrix2<f64>,
    pub jt: Matrix4<f64>,
    pub jx: Matrix4<f64>,
    pub j: Matrix4<f64>,
}

impl EquilibriumState {
    /// Steady state for the given densities, requiring class 1 to be faster.
    pub fn from_densities(rho1: f64, rho2: f64, p: &ModelParams) -> Result<Self> {
        let eq = Self::linearize(rho1, rho2, p)?;
        if !(eq.velocity[0] > eq.velocity[1]) {
            return Err(Error::ClassOrdering {
                v1: eq.velocity[0],
                v2: eq.velocity[1],
            });
        }
        Ok(eq)
    }

    /// Same as [`EquilibriumState::from_densities`] without the class
    /// ordering requirement.
    pub fn linearize(rho1: f64, rho2: f64, p: &ModelParams) -> Result<Self> {
        p.validate()?;
        if !(rho1 > 0.0) || !(rho2 > 0.0) {
            return Err(Error::InfeasibleEquilibrium(format!(
                "densities must be positive (got {rho1}, {rho2})"
            )));
        }
        let ao = p.area_occupancy(rho1, rho2)?;
        let jam = p.classes[0].max_occupancy.min(p.classes[1].max_occupancy);
        if ao > OCCUPANCY_MARGIN * jam {
            return Err(Error::InfeasibleEquilibrium(format!(
                "occupancy {ao:.4} exceeds {OCCUPANCY_MARGIN} x min(AObar) = {:.4}",
                OCCUPANCY_MARGIN * jam
            )));
        }
        let v1 = p.equilibrium_speed(ao, Class::One)?;
        let v2 = p.equilibrium_speed(ao, Class::Two)?;
        if !(v1 > 0.0 && v2 > 0.0) {
            return Err(Error::InfeasibleEquilibrium(format!(
                "steady speeds must be positive (got {v1}, {v2})"
            )));
        }
        let b = p.pressure_sensitivity(rho1, rho2)?;
        let (t1, t2) = (
            1.0 / p.classes[0].relaxation_time,
            1.0 / p.classes[1].relaxation_time,
        );

        #[rustfmt::skip]
        let jt = Matrix4::new(
            1.0,      0.0, 0.0,      0.0,
            b[(0, 0)], 1.0, b[(0, 1)], 0.0,
            0.0,      0.0, 1.0,      0.0,
            b[(1, 0)], 0.0, b[(1, 1)], 1.0,
        );
        #[rustfmt::skip]
        let jx = Matrix4::new(
            v1,            rho1, 0.0,           0.0,
            v1 * b[(0, 0)], v1,   v1 * b[(0, 1)], 0.0,
            0.0,           0.0,  v2,            rho2,
            v2 * b[(1, 0)], 0.0,  v2 * b[(1, 1)], v2,
        );
        #[rustfmt::skip]
        let j = Matrix4::new(
            0.0,            0.0, 0.0,            0.0,
            t1 * b[(0, 0)], t1,  t1 * b[(0, 1)], 0.0,
            0.0,            0.0, 0.0,            0.0,
            t2 * b[(1, 0)], 0.0, t2 * b[(1, 1)], t2,
        );
        Ok(Self {
            density: [rho1, rho2],
            velocity: [v1, v2],
            occupancy: ao,
            beta: b,
            jt,
            jx,
            j,
        })
    }

    /// `z* = (rho1*, v1*, rho2*, v2*)`.
    pub fn state_vector(&self) -> Vector4<f64> {
        Vector4::new(
            self.density[0],
            self.velocity[0],
            self.density[1],
            self.velocity[1],
        )
    }

    /// Linearized total flow `q1 + q2` as a row acting on perturbations.
    pub fn flow_row(&self) -> RowVector4<f64> {
        RowVector4::new(
            self.velocity[0],
            self.density[0],
            self.velocity[1],
            self.density[1],
        )
    }

    fn jt_inverse(&self) -> Matrix4<f64> {
        // Jt is unit lower triangular after a row permutation, det = 1.
        let b = &self.beta;
        #[rustfmt::skip]
        let inv = Matrix4::new(
            1.0,        0.0, 0.0,        0.0,
            -b[(0, 0)], 1.0, -b[(0, 1)], 0.0,
            0.0,        0.0, 1.0,        0.0,
            -b[(1, 0)], 0.0, -b[(1, 1)], 1.0,
        );
        inv
    }

    /// Convection matrix `Jt^-1 Jx`.
    pub fn transport_matrix(&self) -> Matrix4<f64> {
        self.jt_inverse() * self.jx
    }

    /// Source matrix `Jt^-1 J` of `z_t + A z_x + B z = 0`.
    pub fn relaxation_matrix(&self) -> Matrix4<f64> {
        self.jt_inverse() * self.j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    FreeFlow,
    Congested,
    /// Repeated or vanishing characteristic speeds.
    Degenerate,
    /// Distinct speeds with a sign pattern that is neither free flow nor
    /// congested (more than one upstream-travelling wave).
    Unsupported,
}

/// Eigenvectors of the convection matrix and the projected source.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    /// Columns are right eigenvectors for `speeds[0..4]`.
    pub theta: Matrix4<f64>,
    pub theta_inv: Matrix4<f64>,
    /// `-Theta^-1 Jt^-1 J Theta`.
    pub jhat: Matrix4<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicBasis {
    /// `(lambda1, lambda2, lambda3, lambda4) = (v1*, v2*, ., .)` from the
    /// closed form; `lambda3 >= lambda4`.
    pub speeds: [f64; 4],
    /// Discriminant `Delta` of the closed form.
    pub delta: f64,
    pub regime: Regime,
    modal: Option<ModalBasis>,
}

impl CharacteristicBasis {
    pub fn new(eq: &EquilibriumState) -> Self {
        let speeds = characteristic_speeds(eq);
        let (lambda, delta) = (speeds.0, speeds.1);
        let scale = lambda.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        let tol = DEGENERACY_TOL * scale;
        let repeated = (0..4).any(|a| (a + 1..4).any(|b| (lambda[a] - lambda[b]).abs() <= tol));
        let stalled = lambda.iter().any(|l| l.abs() <= tol);
        if repeated || stalled {
            return Self {
                speeds: lambda,
                delta,
                regime: Regime::Degenerate,
                modal: None,
            };
        }
        let regime = if lambda.iter().all(|&l| l > 0.0) {
            Regime::FreeFlow
        } else if lambda[..3].iter().all(|&l| l > 0.0) && lambda[3] < 0.0 {
            Regime::Congested
        } else {
            Regime::Unsupported
        };

        let a = eq.transport_matrix();
        let mut theta = Matrix4::zeros();
        for (col, &l) in lambda.iter().enumerate() {
            theta.set_column(col, &null_vector(&(a - Matrix4::identity() * l)));
        }
        let modal = ModalBasis::from_theta(theta, eq);
        Self {
            speeds: lambda,
            delta,
            regime,
            modal,
        }
    }

    pub fn modal(&self) -> Result<&ModalBasis> {
        self.modal.as_ref().ok_or(Error::Degenerate(self.speeds))
    }

    /// Same basis with eigenvector columns multiplied by `scale`.
    pub fn with_column_scaling(&self, eq: &EquilibriumState, scale: [f64; 4]) -> Result<Self> {
        let m = self.modal()?;
        let theta = m.theta * Matrix4::from_diagonal(&Vector4::from(scale));
        let modal = ModalBasis::from_theta(theta, eq)
            .ok_or_else(|| Error::InvalidParameter("column scaling must be nonzero".into()))?;
        Ok(Self {
            modal: Some(modal),
            ..self.clone()
        })
    }

    /// `lambda4 <= min(l1, l2) <= lambda3 <= max(l1, l2)` up to rounding.
    pub fn satisfies_ordering(&self) -> bool {
        let [l1, l2, l3, l4] = self.speeds;
        let eps = 1e-12 * self.speeds.iter().fold(1.0_f64, |m, l| m.max(l.abs()));
        l4 <= l1.min(l2) + eps && l1.min(l2) <= l3 + eps && l3 <= l1.max(l2) + eps
    }

    pub fn negative_speeds(&self) -> usize {
        self.speeds.iter().filter(|&&l| l < 0.0).count()
    }
}

impl ModalBasis {
    fn from_theta(theta: Matrix4<f64>, eq: &EquilibriumState) -> Option<Self> {
        let theta_inv = theta.try_inverse()?;
        let jhat = -(theta_inv * eq.relaxation_matrix() * theta);
        Some(Self {
            theta,
            theta_inv,
            jhat,
        })
    }
}

/// Closed-form characteristic speeds and discriminant.
pub fn characteristic_speeds(eq: &EquilibriumState) -> ([f64; 4], f64) {
    let [r1, r2] = eq.density;
    let [v1, v2] = eq.velocity;
    let (b11, b22) = (eq.beta[(0, 0)], eq.beta[(1, 1)]);
    let radicand = (b22 * r2 - b11 * r1 + v1 - v2).powi(2) + 4.0 * b11 * b22 * r1 * r2;
    debug_assert!(radicand >= 0.0);
    let delta = radicand.max(0.0).sqrt();
    let mid = v1 + v2 - b11 * r1 - b22 * r2;
    ([v1, v2, 0.5 * (mid + delta), 0.5 * (mid - delta)], delta)
}

/// Unit null vector of a rank-deficient matrix, sign fixed so that the
/// largest-magnitude entry is positive.
fn null_vector(m: &Matrix4<f64>) -> Vector4<f64> {
    let svd = SVD::new(*m, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut v: Vector4<f64> = v_t.row(idx).transpose();
    v /= v.norm();
    let pivot = v.iamax();
    if v[pivot] < 0.0 {
        v = -v;
    }
    v
}
