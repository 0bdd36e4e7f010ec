//! Riemann coordinates of the linearized model.
//!
//! With `y = Theta^-1 z` every component is transported at its own speed and
//! coupled only through `Jhat = -Theta^-1 Jt^-1 J Theta`. Scaling each
//! component by `exp(-Jhat_ii / lambda_i x)` removes the self-coupling, and
//! reordering puts the downstream speeds first in ascending order:
//!
//! ```text
//! w_t + Lambda+ w_x = Sigma++(x) w + Sigma+-(x) w4
//! w4_t - mu w4_x    = Sigma-+(x) w
//! w(0)  = Q0 w4(0)
//! w4(L) = R1 w(L) + Ubar,     Ubar = exp(-Jhat_44 / lambda4 L) U / kappa
//! ```
//!
//! Coupling coefficients are `Sigma_ij(x) = Jhat'_ij exp((c_j - c_i) x)` with
//! `c_i = Jhat'_ii / lambda'_i` in slot order, evaluated on demand.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, RowVector3, RowVector4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::kernel::DesignModel;
use crate::model::{CharacteristicBasis, EquilibriumState, Regime};

/// Below this magnitude the input scaling is treated as zero.
pub const KAPPA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RiemannSystem {
    length: f64,
    /// `slots[s]` is the column of `Theta` (and index into the speeds)
    /// carried by Riemann coordinate `w_{s+1}`.
    slots: [usize; 4],
    speeds: [f64; 4],
    decay: [f64; 4],
    coupling: Matrix4<f64>,
    theta: Matrix4<f64>,
    theta_inv: Matrix4<f64>,
    q0: Vector3<f64>,
    r1: RowVector3<f64>,
    kappa: f64,
}

impl RiemannSystem {
    pub fn build(eq: &EquilibriumState, cb: &CharacteristicBasis, length: f64) -> Result<Self> {
        let modal = cb.modal()?;
        if cb.regime != Regime::Congested {
            return Err(Error::NotCongested(format!(
                "regime {:?}, lambda4 = {:+.4}",
                cb.regime, cb.speeds[3]
            )));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "track length must be positive (got {length})"
            )));
        }

        let mut positive: Vec<usize> = (0..4).filter(|&i| cb.speeds[i] > 0.0).collect();
        positive.sort_by(|&a, &b| cb.speeds[a].total_cmp(&cb.speeds[b]));
        let negative = (0..4).find(|&i| cb.speeds[i] < 0.0).expect("congested");
        let slots = [positive[0], positive[1], positive[2], negative];

        let speeds = slots.map(|c| cb.speeds[c]);
        let coupling = Matrix4::from_fn(|r, c| modal.jhat[(slots[r], slots[c])]);
        let decay = std::array::from_fn(|s| coupling[(s, s)] / speeds[s]);

        let mut rs = Self {
            length,
            slots,
            speeds,
            decay,
            coupling,
            theta: modal.theta,
            theta_inv: modal.theta_inv,
            q0: Vector3::zeros(),
            r1: RowVector3::zeros(),
            kappa: 0.0,
        };
        let (q0, r1, kappa) = rs.boundary_matrices(eq)?;
        rs.q0 = q0;
        rs.r1 = r1;
        rs.kappa = kappa;
        Ok(rs)
    }

    /// `Q0`, `R1` and `kappa` from the linearized boundary conditions.
    ///
    /// At `x = 0` the rows `rho1~ = 0`, `rho2~ = 0` and zero flow
    /// perturbation give `M_u w(0) + m_4 w4(0) = 0`; at `x = L` the flow row
    /// expressed in Riemann coordinates is solved for `w4(L)`.
    pub fn boundary_matrices(
        &self,
        eq: &EquilibriumState,
    ) -> Result<(Vector3<f64>, RowVector3<f64>, f64)> {
        let flow = eq.flow_row();
        let at_inlet = self.from_riemann_matrix(0.0);
        let rows = [
            at_inlet.row(0).into_owned(),
            at_inlet.row(2).into_owned(),
            flow * at_inlet,
        ];
        let m_u = Matrix3::from_fn(|r, c| rows[r][c]);
        let m_4 = Vector3::from_fn(|r, _| rows[r][3]);
        let lu = m_u.lu();
        let scale = m_u.amax();
        let det = lu.determinant();
        if !(det.abs() > 1e-12 * scale.powi(3)) {
            return Err(Error::IllPosedBoundary(format!(
                "inlet conditions do not determine w(0) from w4(0) (det = {det:e})"
            )));
        }
        let q0 = lu
            .solve(&(-m_4))
            .ok_or_else(|| Error::IllPosedBoundary("singular inlet system".into()))?;

        let g = flow * self.theta;
        let kappa = g[self.slots[3]];
        if !(kappa.abs() > KAPPA_TOL) {
            return Err(Error::VanishingKappa(kappa));
        }
        let out = kappa * (self.decay[3] * self.length).exp();
        let r1 = RowVector3::from_fn(|_, s| {
            -g[self.slots[s]] * (self.decay[s] * self.length).exp() / out
        });
        Ok((q0, r1, kappa))
    }

    /// Same system with replaced boundary matrices.
    pub fn with_boundary_matrices(mut self, q0: Vector3<f64>, r1: RowVector3<f64>) -> Self {
        self.q0 = q0;
        self.r1 = r1;
        self
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Column of `Theta` behind each Riemann slot.
    pub fn slots(&self) -> [usize; 4] {
        self.slots
    }

    /// Signed speeds in slot order `(v2*, lambda3, v1*, lambda4)`.
    pub fn speeds(&self) -> [f64; 4] {
        self.speeds
    }

    /// Exponents `c_i = Jhat_ii / lambda_i` in slot order.
    pub fn decay_rates(&self) -> [f64; 4] {
        self.decay
    }

    /// `Jhat` permuted to slot order.
    pub fn coupling(&self) -> &Matrix4<f64> {
        &self.coupling
    }

    pub fn theta(&self) -> &Matrix4<f64> {
        &self.theta
    }

    pub fn q0_bar(&self) -> Vector3<f64> {
        self.q0
    }

    pub fn r1_bar(&self) -> RowVector3<f64> {
        self.r1
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Factor `exp(-Jhat_44 / lambda4 L) / kappa` mapping `U` to `Ubar`.
    pub fn input_scale(&self) -> f64 {
        (-self.decay[3] * self.length).exp() / self.kappa
    }

    /// `exp(-c_i x)` for each slot.
    pub fn scale_diag(&self, x: f64) -> [f64; 4] {
        self.decay.map(|c| (-c * x).exp())
    }

    /// Full source matrix with zero diagonal, slot order.
    pub fn sigma(&self, x: f64) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| {
            if i == j {
                0.0
            } else {
                self.coupling[(i, j)] * ((self.decay[j] - self.decay[i]) * x).exp()
            }
        })
    }

    /// `T^-1(x)`: physical perturbation to Riemann coordinates.
    pub fn to_riemann_matrix(&self, x: f64) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for s in 0..4 {
            let row = self.theta_inv.row(self.slots[s]) * (-self.decay[s] * x).exp();
            m.set_row(s, &row);
        }
        m
    }

    /// `T(x)`: Riemann coordinates to physical perturbation.
    pub fn from_riemann_matrix(&self, x: f64) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for s in 0..4 {
            let col = self.theta.column(self.slots[s]) * (self.decay[s] * x).exp();
            m.set_column(s, &col);
        }
        m
    }

    /// Upper three rows of `T^-1(x)`.
    pub fn tu_inv(&self, x: f64) -> Matrix3x4<f64> {
        self.to_riemann_matrix(x).fixed_rows::<3>(0).into_owned()
    }

    /// Last row of `T^-1(x)`.
    pub fn tl_inv(&self, x: f64) -> RowVector4<f64> {
        self.to_riemann_matrix(x).row(3).into_owned()
    }

    pub fn to_riemann(&self, xs: &[f64], z: &[Vector4<f64>]) -> Result<Vec<Vector4<f64>>> {
        check_len(xs.len(), z.len())?;
        Ok(xs
            .iter()
            .zip(z)
            .map(|(&x, zi)| self.to_riemann_matrix(x) * zi)
            .collect())
    }

    pub fn from_riemann(&self, xs: &[f64], w: &[Vector4<f64>]) -> Result<Vec<Vector4<f64>>> {
        check_len(xs.len(), w.len())?;
        Ok(xs
            .iter()
            .zip(w)
            .map(|(&x, wi)| self.from_riemann_matrix(x) * wi)
            .collect())
    }

    /// Outlet value `w4(L)` for given downstream states and input.
    pub fn outlet_value(&self, w_at_l: &Vector3<f64>, control: f64) -> f64 {
        (self.r1 * w_at_l)[0] + self.input_scale() * control
    }
}

impl DesignModel for RiemannSystem {
    fn length(&self) -> f64 {
        self.length
    }

    fn lambda_plus(&self) -> [f64; 3] {
        [self.speeds[0], self.speeds[1], self.speeds[2]]
    }

    fn lambda_minus(&self) -> f64 {
        -self.speeds[3]
    }

    fn sigma_pp(&self, x: f64) -> Matrix3<f64> {
        self.sigma(x).fixed_view::<3, 3>(0, 0).into_owned()
    }

    fn sigma_pm(&self, x: f64) -> Vector3<f64> {
        self.sigma(x).fixed_view::<3, 1>(0, 3).into_owned()
    }

    fn sigma_mp(&self, x: f64) -> RowVector3<f64> {
        self.sigma(x).fixed_view::<1, 3>(3, 0).into_owned()
    }

    fn q0(&self) -> Vector3<f64> {
        self.q0
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}
