//! Outlet feedback in physical variables.
//!
//! Requiring `beta(L, t) = 0` gives
//!
//! ```text
//! Ubar = -R1 w(L) + int_0^L K(L,xi) w(xi) + L(L,xi) w4(xi) dxi
//! ```
//!
//! and with `w = Tu^-1(x) Psi`, `w4 = Tl^-1(x) Psi`, `U = kappa exp(c4 L) Ubar`
//! this becomes a boundary gain on `Psi(L)` plus an integral gain, both
//! precomputed on the simulation grid.

use nalgebra::{RowVector3, RowVector4, Vector4};

use crate::error::{Error, Result};
use crate::kernel::KernelSolution;
use crate::riemann::RiemannSystem;

/// Finite convergence time `L / v2* + L / mu`.
pub fn convergence_time(rs: &RiemannSystem) -> f64 {
    let l = rs.length();
    let s = rs.speeds();
    l / s[0] + l / (-s[3])
}

/// Trapezoid weights on a sorted node set.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for m in 1..n {
        let d = 0.5 * (xs[m] - xs[m - 1]);
        w[m - 1] += d;
        w[m] += d;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGains {
    xs: Vec<f64>,
    weights: Vec<f64>,
    boundary: RowVector4<f64>,
    integral: Vec<RowVector4<f64>>,
    t_f: f64,
}

impl FeedbackGains {
    pub fn build(rs: &RiemannSystem, ks: &KernelSolution, xs: &[f64]) -> Result<Self> {
        let l = rs.length();
        if xs.len() < 2
            || xs[0] != 0.0
            || (xs[xs.len() - 1] - l).abs() > 1e-9 * l
            || xs.windows(2).any(|p| !(p[1] > p[0]))
        {
            return Err(Error::InvalidConfig(
                "gain grid must increase from 0 to L".into(),
            ));
        }
        let scale = 1.0 / rs.input_scale();
        let boundary = -scale * rs.r1_bar() * rs.tu_inv(l);
        let integral = xs
            .iter()
            .map(|&xi| {
                let (k, lv) = ks.eval(l, xi);
                scale * (k * rs.tu_inv(xi) + lv * rs.tl_inv(xi))
            })
            .collect();
        Ok(Self {
            xs: xs.to_vec(),
            weights: trapezoid_weights(xs),
            boundary,
            integral,
            t_f: convergence_time(rs),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Gain on `Psi(L, t)`.
    pub fn boundary_gain(&self) -> RowVector4<f64> {
        self.boundary
    }

    /// Integral gain at the grid nodes.
    pub fn integral_gain(&self) -> &[RowVector4<f64>] {
        &self.integral
    }

    pub fn convergence_time(&self) -> f64 {
        self.t_f
    }

    pub fn is_finite(&self) -> bool {
        self.boundary.iter().all(|v| v.is_finite())
            && self.integral.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Row `r_m` with `U = sum_m r_m Psi(x_m)`.
    pub fn row(&self, m: usize) -> RowVector4<f64> {
        let mut r = self.weights[m] * self.integral[m];
        if m + 1 == self.xs.len() {
            r += self.boundary;
        }
        r
    }

    /// Flow perturbation `U(t)` demanded at the outlet for the state
    /// perturbation `psi` sampled at the gain nodes.
    pub fn control_input(&self, psi: &[Vector4<f64>]) -> Result<f64> {
        if psi.len() != self.xs.len() {
            return Err(Error::ShapeMismatch {
                expected: self.xs.len(),
                got: psi.len(),
            });
        }
        Ok((0..psi.len()).map(|m| (self.row(m) * psi[m])[0]).sum())
    }
}

/// `Ubar` computed directly in Riemann coordinates.
pub fn riemann_control(
    rs: &RiemannSystem,
    ks: &KernelSolution,
    xs: &[f64],
    w: &[Vector4<f64>],
) -> Result<f64> {
    if w.len() != xs.len() {
        return Err(Error::ShapeMismatch {
            expected: xs.len(),
            got: w.len(),
        });
    }
    let l = rs.length();
    let last = w[w.len() - 1];
    let mut u = -(rs.r1_bar() * last.fixed_rows::<3>(0))[0];
    for ((&xi, wt), wm) in xs.iter().zip(trapezoid_weights(xs)).zip(w) {
        let (k, lv) = ks.eval(l, xi);
        u += wt * ((k * wm.fixed_rows::<3>(0))[0] + lv * wm[3]);
    }
    Ok(u)
}

/// Volterra map `beta(x) = w4(x) - int_0^x K(x,xi) w(xi) + L(x,xi) w4(xi) dxi`
/// with the kernels tabulated on a fixed node set.
#[derive(Debug, Clone)]
pub struct BacksteppingTransform {
    xs: Vec<f64>,
    rows: Vec<Vec<(RowVector3<f64>, f64)>>,
}

impl BacksteppingTransform {
    pub fn new(ks: &KernelSolution, xs: &[f64]) -> Self {
        let rows = (0..xs.len())
            .map(|m| {
                let w = trapezoid_weights(&xs[..=m]);
                (0..=m)
                    .map(|n| {
                        let (k, l) = ks.eval(xs[m], xs[n].min(xs[m]));
                        (w[n] * k, w[n] * l)
                    })
                    .collect()
            })
            .collect();
        Self {
            xs: xs.to_vec(),
            rows,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn beta(&self, w: &[Vector4<f64>]) -> Result<Vec<f64>> {
        if w.len() != self.xs.len() {
            return Err(Error::ShapeMismatch {
                expected: self.xs.len(),
                got: w.len(),
            });
        }
        Ok(self.rows.iter().enumerate().map(|(m, row)| self.beta_row(m, row, w)).collect())
    }

    /// `beta(L)` only.
    pub fn beta_at_outlet(&self, w: &[Vector4<f64>]) -> Result<f64> {
        if w.len() != self.xs.len() {
            return Err(Error::ShapeMismatch {
                expected: self.xs.len(),
                got: w.len(),
            });
        }
        let m = self.xs.len() - 1;
        Ok(self.beta_row(m, &self.rows[m], w))
    }

    fn beta_row(&self, m: usize, row: &[(RowVector3<f64>, f64)], w: &[Vector4<f64>]) -> f64 {
        let mut b = w[m][3];
        for ((k, l), wn) in row.iter().zip(w) {
            b -= (k * wn.fixed_rows::<3>(0))[0] + l * wn[3];
        }
        b
    }

    /// Splits `w` into `(alpha, beta)` with `alpha = (w1, w2, w3)`.
    pub fn apply(&self, w: &[Vector4<f64>]) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
        let beta = self.beta(w)?;
        let alpha = w.iter().map(|v| [v[0], v[1], v[2]]).collect();
        Ok((alpha, beta))
    }
}
