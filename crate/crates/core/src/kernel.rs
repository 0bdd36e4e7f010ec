//! Backstepping kernels on the triangle `0 <= xi <= x <= L`.
//!
//! The transform `beta = w4 - int_0^x K(x,xi) w(xi) + L(x,xi) w4(xi) dxi`
//! maps the Riemann system onto a target whose last state is transported
//! upstream without sources. Its kernels satisfy
//!
//! ```text
//! -mu K_x + K_xi Lambda+ + K Sigma++(xi) + L Sigma-+(xi) = 0
//! K(x, x) (Lambda+ + mu) = -Sigma-+(x)
//! L(x, xi) = K(x-xi, 0) Lambda+ Q0 / mu + 1/mu int_0^xi K(x-xi+s, s) Sigma+-(s) ds
//! ```
//!
//! with `mu = -lambda4 > 0`. Each `k_j` is constant along lines of direction
//! `(-mu, lambda_j)` up to the integral of the right-hand side, which carries
//! every node back to the diagonal. The nonlocal terms are lagged and the
//! whole map is iterated to a fixed point.

use std::io::Write;

use nalgebra::{Matrix3, RowVector3, Vector3};

use crate::error::{Error, Result};

/// Coefficients of a heterodirectional system with three downstream states
/// and one upstream state, as seen by the kernel solver.
pub trait DesignModel {
    fn length(&self) -> f64;
    /// Positive speeds of the downstream states.
    fn lambda_plus(&self) -> [f64; 3];
    /// Magnitude `mu` of the upstream speed.
    fn lambda_minus(&self) -> f64;
    fn sigma_pp(&self, x: f64) -> Matrix3<f64>;
    fn sigma_pm(&self, x: f64) -> Vector3<f64>;
    fn sigma_mp(&self, x: f64) -> RowVector3<f64>;
    fn q0(&self) -> Vector3<f64>;
}

/// Design model with spatially constant coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformDesignModel {
    pub length: f64,
    pub lambda_plus: [f64; 3],
    pub mu: f64,
    pub sigma_pp: Matrix3<f64>,
    pub sigma_pm: Vector3<f64>,
    pub sigma_mp: RowVector3<f64>,
    pub q0: Vector3<f64>,
}

impl DesignModel for UniformDesignModel {
    fn length(&self) -> f64 {
        self.length
    }
    fn lambda_plus(&self) -> [f64; 3] {
        self.lambda_plus
    }
    fn lambda_minus(&self) -> f64 {
        self.mu
    }
    fn sigma_pp(&self, _: f64) -> Matrix3<f64> {
        self.sigma_pp
    }
    fn sigma_pm(&self, _: f64) -> Vector3<f64> {
        self.sigma_pm
    }
    fn sigma_mp(&self, _: f64) -> RowVector3<f64> {
        self.sigma_mp
    }
    fn q0(&self) -> Vector3<f64> {
        self.q0
    }
}

/// Uniform nodes `(x_i, xi_k) = (i h, k h)`, `0 <= k <= i < n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangularGrid {
    n: usize,
    length: f64,
}

impl TriangularGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::GridTooCoarse(format!(
                "need at least 3 nodes per edge (got {n})"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "track length must be positive (got {length})"
            )));
        }
        Ok(Self { n, length })
    }

    /// Nodes per edge.
    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, k: usize) -> usize {
        debug_assert!(k <= i && i < self.n);
        i * (i + 1) / 2 + k
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.length
        } else {
            i as f64 * self.spacing()
        }
    }

    /// Grid with `2^levels` times as many intervals per edge.
    pub fn refined(&self, levels: u32) -> Self {
        Self {
            n: (self.n - 1) * (1 << levels) + 1,
            length: self.length,
        }
    }

    /// Linear weights of the three vertices of the triangle holding
    /// `(x, xi)`. Squares are split along lines `x - xi = const`.
    fn locate(&self, x: f64, xi: f64) -> [(usize, f64); 3] {
        let h = self.spacing();
        let a = (x / h).clamp(0.0, (self.n - 1) as f64);
        let b = (xi / h).clamp(0.0, a);
        let i0 = (a.floor() as usize).min(self.n - 2);
        let k0 = (b.floor() as usize).min(i0);
        let fa = a - i0 as f64;
        let mut fb = b - k0 as f64;
        if k0 == i0 {
            fb = fb.min(fa);
        }
        if fa >= fb {
            // (i0,k0), (i0+1,k0), (i0+1,k0+1)
            [
                (self.index(i0, k0), 1.0 - fa),
                (self.index(i0 + 1, k0), fa - fb),
                (self.index(i0 + 1, k0 + 1), fb),
            ]
        } else {
            // (i0,k0), (i0,k0+1), (i0+1,k0+1)
            [
                (self.index(i0, k0), 1.0 - fb),
                (self.index(i0, k0 + 1), fb - fa),
                (self.index(i0 + 1, k0 + 1), fa),
            ]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            nodes: 201,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Coarsest admissible ratio of a characteristic step to the coupling time
/// scale, `h max|Sigma| / min(lambda_j + mu)`.
pub const MAX_COUPLING_STEP: f64 = 0.5;

/// Sub-samples per grid interval in the coefficient table.
const TABLE_REFINEMENT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSolution {
    grid: TriangularGrid,
    k: [Vec<f64>; 3],
    l: Vec<f64>,
    /// Sup-norm distance between successive iterates.
    history: Vec<f64>,
}

impl KernelSolution {
    pub fn zeros(grid: TriangularGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            l: vec![0.0; n],
            history: Vec::new(),
        }
    }

    pub fn grid(&self) -> &TriangularGrid {
        &self.grid
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn k_node(&self, i: usize, k: usize) -> RowVector3<f64> {
        let n = self.grid.index(i, k);
        RowVector3::new(self.k[0][n], self.k[1][n], self.k[2][n])
    }

    pub fn l_node(&self, i: usize, k: usize) -> f64 {
        self.l[self.grid.index(i, k)]
    }

    pub fn set_k_node(&mut self, i: usize, k: usize, v: RowVector3<f64>) {
        let n = self.grid.index(i, k);
        for j in 0..3 {
            self.k[j][n] = v[j];
        }
    }

    pub fn set_l_node(&mut self, i: usize, k: usize, v: f64) {
        let n = self.grid.index(i, k);
        self.l[n] = v;
    }

    /// Piecewise linear interpolation of `(K, L)` at `(x, xi)`.
    pub fn eval(&self, x: f64, xi: f64) -> (RowVector3<f64>, f64) {
        let w = self.grid.locate(x, xi);
        let mut k = RowVector3::zeros();
        let mut l = 0.0;
        for &(n, c) in &w {
            k[0] += c * self.k[0][n];
            k[1] += c * self.k[1][n];
            k[2] += c * self.k[2][n];
            l += c * self.l[n];
        }
        (k, l)
    }

    /// Largest absolute kernel entry.
    pub fn sup_norm(&self) -> f64 {
        self.k
            .iter()
            .chain(std::iter::once(&self.l))
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.k
            .iter()
            .chain(std::iter::once(&self.l))
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// CSV with columns `x, xi, k11, k12, k13, L11`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "xi", "k11", "k12", "k13", "L11"])?;
        for i in 0..self.grid.nodes() {
            for k in 0..=i {
                let kv = self.k_node(i, k);
                w.write_record(&[
                    format!("{}", self.grid.coord(i)),
                    format!("{}", self.grid.coord(k)),
                    format!("{:e}", kv[0]),
                    format!("{:e}", kv[1]),
                    format!("{:e}", kv[2]),
                    format!("{:e}", self.l_node(i, k)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Coefficients sampled finely enough for linear interpolation between
/// characteristic sample points.
struct CoefficientTable {
    dx: f64,
    pp: Vec<Matrix3<f64>>,
    mp: Vec<RowVector3<f64>>,
}

impl CoefficientTable {
    fn new<M: DesignModel + ?Sized>(model: &M, grid: &TriangularGrid) -> Self {
        let m = (grid.nodes() - 1) * TABLE_REFINEMENT;
        let dx = grid.length() / m as f64;
        let xs = (0..=m).map(|i| if i == m { grid.length() } else { i as f64 * dx });
        let (pp, mp) = xs.map(|x| (model.sigma_pp(x), model.sigma_mp(x))).unzip();
        Self { dx, pp, mp }
    }

    fn at(&self, x: f64) -> (Matrix3<f64>, RowVector3<f64>) {
        let last = self.pp.len() - 1;
        let s = (x / self.dx).clamp(0.0, last as f64);
        let i = (s.floor() as usize).min(last - 1);
        let f = s - i as f64;
        (
            self.pp[i] * (1.0 - f) + self.pp[i + 1] * f,
            self.mp[i] * (1.0 - f) + self.mp[i + 1] * f,
        )
    }
}

fn check_model<M: DesignModel + ?Sized>(model: &M, grid: &TriangularGrid) -> Result<()> {
    let lp = model.lambda_plus();
    let mu = model.lambda_minus();
    if !(mu > 0.0) || lp.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotCongested(format!(
            "kernel design needs positive lambda+ and mu (got {lp:?}, mu = {mu})"
        )));
    }
    if (model.length() - grid.length()).abs() > 1e-12 * model.length() {
        return Err(Error::InvalidParameter(format!(
            "grid length {} differs from model length {}",
            grid.length(),
            model.length()
        )));
    }
    let h = grid.spacing();
    let slowest = lp.iter().fold(f64::INFINITY, |m, &l| m.min(l + mu));
    let mut coupling = 0.0_f64;
    for i in 0..grid.nodes() {
        let x = grid.coord(i);
        let s = model
            .sigma_pp(x)
            .amax()
            .max(model.sigma_pm(x).amax())
            .max(model.sigma_mp(x).amax());
        if !s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coupling coefficients not finite at x = {x}"
            )));
        }
        coupling = coupling.max(s);
    }
    let ratio = h * coupling / slowest;
    if ratio > MAX_COUPLING_STEP {
        return Err(Error::GridTooCoarse(format!(
            "h max|Sigma| / min(lambda+ + mu) = {ratio:.3} exceeds {MAX_COUPLING_STEP} with {} nodes",
            grid.nodes()
        )));
    }
    Ok(())
}

/// Diagonal values `-Sigma-+_j(s) / (lambda_j + mu)`.
fn diagonal_value<M: DesignModel + ?Sized>(model: &M, s: f64) -> RowVector3<f64> {
    let lp = model.lambda_plus();
    let mu = model.lambda_minus();
    let smp = model.sigma_mp(s);
    RowVector3::from_fn(|_, j| -smp[j] / (lp[j] + mu))
}

/// Fills `L` from the current `K`: the trace at `xi = 0`, then trapezoidal
/// integration along lines of slope one.
fn update_l<M: DesignModel + ?Sized>(model: &M, sol: &mut KernelSolution) {
    let grid = sol.grid;
    let n = grid.nodes();
    let h = grid.spacing();
    let mu = model.lambda_minus();
    let lp = model.lambda_plus();
    let q = model.q0();
    let lq = Vector3::new(lp[0] * q[0], lp[1] * q[1], lp[2] * q[2]) / mu;
    let spm: Vec<Vector3<f64>> = (0..n).map(|k| model.sigma_pm(grid.coord(k))).collect();
    for i in 0..n {
        let v = (sol.k_node(i, 0) * lq)[0];
        sol.set_l_node(i, 0, v);
    }
    for i in 1..n {
        for k in 1..=i {
            let prev = sol.l_node(i - 1, k - 1);
            let a = (sol.k_node(i, k) * spm[k])[0];
            let b = (sol.k_node(i - 1, k - 1) * spm[k - 1])[0];
            sol.set_l_node(i, k, prev + 0.5 * h * (a + b) / mu);
        }
    }
}

/// One sweep: transport every component from the diagonal with the
/// right-hand side taken from `prev`. `prev = None` drops the right-hand side.
fn sweep<M: DesignModel + ?Sized>(
    model: &M,
    table: &CoefficientTable,
    prev: Option<&KernelSolution>,
    next: &mut KernelSolution,
) {
    let grid = next.grid;
    let h = grid.spacing();
    let lp = model.lambda_plus();
    let mu = model.lambda_minus();
    for i in 0..grid.nodes() {
        let x = grid.coord(i);
        for k in 0..=i {
            let xi = grid.coord(k);
            let mut val = RowVector3::zeros();
            for j in 0..3 {
                let speed = lp[j] + mu;
                let tau = (x - xi) / speed;
                let foot = (lp[j] * x + mu * xi) / speed;
                val[j] = diagonal_value(model, foot)[j];
                let Some(prev) = prev else { continue };
                if i == k {
                    continue;
                }
                let path = tau * (lp[j] * lp[j] + mu * mu).sqrt();
                let steps = ((path / h).ceil() as usize).max(1);
                let dt = tau / steps as f64;
                let mut acc = 0.0;
                for m in 0..=steps {
                    let t = m as f64 * dt;
                    let (px, pxi) = (x - mu * t, xi + lp[j] * t);
                    let (kv, lv) = prev.eval(px, pxi.min(px));
                    let (spp, smp) = table.at(pxi);
                    let f = (kv * spp.column(j))[0] + lv * smp[j];
                    let wgt = if m == 0 || m == steps { 0.5 } else { 1.0 };
                    acc += wgt * f;
                }
                val[j] += acc * dt;
            }
            next.set_k_node(i, k, val);
        }
    }
    update_l(model, next);
}

fn distance(a: &KernelSolution, b: &KernelSolution) -> f64 {
    let mut d = 0.0_f64;
    for j in 0..3 {
        for (x, y) in a.k[j].iter().zip(&b.k[j]) {
            d = d.max((x - y).abs());
        }
    }
    for (x, y) in a.l.iter().zip(&b.l) {
        d = d.max((x - y).abs());
    }
    d
}

/// Successive approximation of the kernel equations.
pub fn solve_kernels<M: DesignModel + ?Sized>(
    model: &M,
    cfg: &KernelConfig,
) -> Result<KernelSolution> {
    let grid = TriangularGrid::new(cfg.nodes, model.length())?;
    solve_kernels_on(model, grid, cfg.tol, cfg.max_iter)
}

pub fn solve_kernels_on<M: DesignModel + ?Sized>(
    model: &M,
    grid: TriangularGrid,
    tol: f64,
    max_iter: usize,
) -> Result<KernelSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "kernel tolerance must be positive (got {tol})"
        )));
    }
    check_model(model, &grid)?;
    let table = CoefficientTable::new(model, &grid);

    let mut cur = KernelSolution::zeros(grid);
    sweep(model, &table, None, &mut cur);
    let mut next = cur.clone();
    let mut history = Vec::new();
    for _ in 0..max_iter {
        sweep(model, &table, Some(&cur), &mut next);
        let d = distance(&cur, &next);
        history.push(d);
        std::mem::swap(&mut cur, &mut next);
        if !d.is_finite() || !cur.is_finite() {
            return Err(Error::KernelNonConvergence {
                iterations: history.len(),
                increment: d,
            });
        }
        if d < tol {
            cur.history = history;
            return Ok(cur);
        }
    }
    Err(Error::KernelNonConvergence {
        iterations: max_iter,
        increment: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Discrete residuals of the kernel equations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelResidual {
    /// Diagonal condition.
    pub diagonal: f64,
    /// Trace `L(x, 0) = K(x, 0) Lambda+ Q0 / mu`.
    pub trace: f64,
    /// Integral relation for `L` (trapezoid on grid lines).
    pub integral: f64,
    /// Transport equation for `K`, one step along each characteristic.
    pub transport: f64,
}

impl KernelResidual {
    pub fn max(&self) -> f64 {
        self.diagonal
            .max(self.trace)
            .max(self.integral)
            .max(self.transport)
    }
}

/// Residuals of `ks` with respect to the exact coefficients of `model`.
///
/// The transport residual differences `k_j` between a node and the point one
/// grid line closer to the diagonal along its characteristic, which lies on a
/// triangle edge, and averages the right-hand side at both ends.
pub fn kernel_residual<M: DesignModel + ?Sized>(model: &M, ks: &KernelSolution) -> KernelResidual {
    let grid = ks.grid;
    let n = grid.nodes();
    let h = grid.spacing();
    let lp = model.lambda_plus();
    let mu = model.lambda_minus();
    let q = model.q0();
    let lq = Vector3::new(lp[0] * q[0], lp[1] * q[1], lp[2] * q[2]) / mu;
    let mut r = KernelResidual::default();

    for i in 0..n {
        let x = grid.coord(i);
        let d = (ks.k_node(i, i) - diagonal_value(model, x)).amax();
        r.diagonal = r.diagonal.max(d);
        let t = (ks.l_node(i, 0) - (ks.k_node(i, 0) * lq)[0]).abs();
        r.trace = r.trace.max(t);
    }

    for i in 1..n {
        for k in 1..=i {
            let a = (ks.k_node(i, k) * model.sigma_pm(grid.coord(k)))[0];
            let b = (ks.k_node(i - 1, k - 1) * model.sigma_pm(grid.coord(k - 1)))[0];
            let expect = ks.l_node(i - 1, k - 1) + 0.5 * h * (a + b) / mu;
            r.integral = r.integral.max((ks.l_node(i, k) - expect).abs());
        }
    }

    let rhs = |j: usize, xi: f64, kv: &RowVector3<f64>, lv: f64| {
        (kv * model.sigma_pp(xi).column(j))[0] + lv * model.sigma_mp(xi)[j]
    };
    for i in 1..n {
        let x = grid.coord(i);
        for k in 0..i {
            let xi = grid.coord(k);
            let kp = ks.k_node(i, k);
            let lv = ks.l_node(i, k);
            for j in 0..3 {
                let tau = h / (lp[j] + mu);
                let (qx, qxi) = (x - mu * tau, xi + lp[j] * tau);
                let (kq, lq) = ks.eval(qx, qxi.min(qx));
                let f = 0.5 * (rhs(j, xi, &kp, lv) + rhs(j, qxi, &kq, lq));
                let res = (kq[j] - kp[j]) / tau + f;
                r.transport = r.transport.max(res.abs());
            }
        }
    }
    r
}
