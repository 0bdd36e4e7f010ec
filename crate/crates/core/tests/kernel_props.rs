mod common;

use std::sync::OnceLock;

use nalgebra::{Matrix3, RowVector3, Vector3};

use twoclass_ar::controller::FeedbackGains;
use twoclass_ar::kernel::{
    kernel_residual, solve_kernels, KernelConfig, KernelSolution, UniformDesignModel,
};
use twoclass_ar::riemann::RiemannSystem;
use twoclass_ar::sim::uniform_nodes;
use twoclass_ar::{DesignModel, Error};

const LEVELS: [usize; 4] = [26, 51, 101, 201];

fn solve(rs: &RiemannSystem, nodes: usize) -> KernelSolution {
    let cfg = KernelConfig {
        nodes,
        ..KernelConfig::default()
    };
    solve_kernels(rs, &cfg).unwrap()
}

/// Benchmark kernels on the refinement ladder, shared by the tests below.
fn ladder() -> &'static (RiemannSystem, Vec<KernelSolution>) {
    static CELL: OnceLock<(RiemannSystem, Vec<KernelSolution>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let (_, _, _, rs) = common::benchmark();
        let sols = LEVELS.iter().map(|&n| solve(&rs, n)).collect();
        (rs, sols)
    })
}

/// The benchmark system with selected couplings switched off.
struct Masked<'a> {
    rs: &'a RiemannSystem,
    pm: bool,
    mp: bool,
    q0: bool,
}

impl DesignModel for Masked<'_> {
    fn length(&self) -> f64 {
        self.rs.length()
    }
    fn lambda_plus(&self) -> [f64; 3] {
        self.rs.lambda_plus()
    }
    fn lambda_minus(&self) -> f64 {
        self.rs.lambda_minus()
    }
    fn sigma_pp(&self, x: f64) -> Matrix3<f64> {
        self.rs.sigma_pp(x)
    }
    fn sigma_pm(&self, x: f64) -> Vector3<f64> {
        if self.pm { self.rs.sigma_pm(x) } else { Vector3::zeros() }
    }
    fn sigma_mp(&self, x: f64) -> RowVector3<f64> {
        if self.mp { self.rs.sigma_mp(x) } else { RowVector3::zeros() }
    }
    fn q0(&self) -> Vector3<f64> {
        if self.q0 { self.rs.q0() } else { Vector3::zeros() }
    }
}

#[test]
fn benchmark_residual_is_small() {
    let (rs, sols) = ladder();
    let r = kernel_residual(rs, &sols[3]);
    assert!(r.max() < 1e-6, "{r:?}");
    assert!(sols[3].is_finite());
}

#[test]
fn residual_decreases_under_refinement() {
    let (rs, sols) = ladder();
    let res: Vec<f64> = sols.iter().map(|s| kernel_residual(rs, s).max()).collect();
    for w in res.windows(2) {
        // first order halves the residual; allow some slack
        assert!(w[1] < 0.7 * w[0], "{res:?}");
    }
}

#[test]
fn gains_converge_under_refinement() {
    let (rs, sols) = ladder();
    let xs = uniform_nodes(100, rs.length());
    let gains: Vec<FeedbackGains> = sols
        .iter()
        .map(|s| FeedbackGains::build(rs, s, &xs).unwrap())
        .collect();
    let diff = |a: &FeedbackGains, b: &FeedbackGains| {
        a.integral_gain()
            .iter()
            .zip(b.integral_gain())
            .map(|(u, v)| (u - v).amax())
            .fold(0.0_f64, f64::max)
    };
    let d: Vec<f64> = gains.windows(2).map(|w| diff(&w[0], &w[1])).collect();
    for w in d.windows(2) {
        assert!(w[1] < 0.7 * w[0], "{d:?}");
    }
    assert_eq!(gains[0].boundary_gain(), gains[3].boundary_gain());
}

#[test]
fn solution_bounded_across_refinements() {
    let (_, sols) = ladder();
    let sup: Vec<f64> = sols.iter().map(KernelSolution::sup_norm).collect();
    let (lo, hi) = sup.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &s| (a.min(s), b.max(s)));
    assert!(sols.iter().all(KernelSolution::is_finite));
    assert!(hi < 1.1 * lo, "{sup:?}");
}

#[test]
fn iteration_contracts_monotonically() {
    let (_, sols) = ladder();
    for s in sols {
        let h = s.history();
        assert!(h.len() >= 2);
        for w in h[1..].windows(2) {
            assert!(w[1] < w[0], "{h:?}");
        }
    }
}

/// Without `Sigma+-` and `Q0` the kernel `L` vanishes and each `k_j` is its
/// diagonal value carried along `(x, xi) + s (-mu, lambda_j)`.
#[test]
fn decoupled_case_matches_characteristics() {
    let (_, _, _, rs) = common::benchmark();
    let m = Masked {
        rs: &rs,
        pm: false,
        mp: true,
        q0: false,
    };
    let cfg = KernelConfig {
        nodes: 101,
        ..KernelConfig::default()
    };
    let ks = solve_kernels(&m, &cfg).unwrap();
    let lp = rs.lambda_plus();
    let mu = rs.lambda_minus();
    let g = ks.grid();
    let mut err = 0.0_f64;
    for i in 0..g.nodes() {
        for k in 0..=i {
            let (x, xi) = (g.coord(i), g.coord(k));
            let kv = ks.k_node(i, k);
            for j in 0..3 {
                let foot = (lp[j] * x + mu * xi) / (lp[j] + mu);
                let expect = -rs.sigma_mp(foot)[j] / (lp[j] + mu);
                err = err.max((kv[j] - expect).abs());
            }
            err = err.max(ks.l_node(i, k).abs());
        }
    }
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn no_upstream_coupling_gives_zero_kernels() {
    let (_, _, _, rs) = common::benchmark();
    let m = Masked {
        rs: &rs,
        pm: true,
        mp: false,
        q0: true,
    };
    let ks = solve_kernels(&m, &KernelConfig { nodes: 51, ..KernelConfig::default() }).unwrap();
    assert_eq!(ks.sup_norm(), 0.0);
}

/// On the diagonal the integral relation for `L` only involves the exact
/// diagonal data of `K`.
#[test]
fn l_on_diagonal_matches_reduction() {
    let (rs, sols) = ladder();
    let ks = &sols[3];
    let lp = rs.lambda_plus();
    let mu = rs.lambda_minus();
    let q = rs.q0();
    let kdiag = |s: f64| {
        let smp = rs.sigma_mp(s);
        RowVector3::from_fn(|_, j| -smp[j] / (lp[j] + mu))
    };
    let lq = Vector3::new(lp[0] * q[0], lp[1] * q[1], lp[2] * q[2]) / mu;
    let l00 = (kdiag(0.0) * lq)[0];
    let g = ks.grid();
    // fine composite Simpson for the reference integral
    let integrand = |s: f64| (kdiag(s) * rs.sigma_pm(s))[0];
    let mut err = 0.0_f64;
    for i in (0..g.nodes()).step_by(20) {
        let x = g.coord(i);
        let m = 2000;
        let dx = x / m as f64;
        let mut acc = integrand(0.0) + integrand(x);
        for k in 1..m {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * integrand(k as f64 * dx);
        }
        let expect = l00 + acc * dx / 3.0 / mu;
        err = err.max((ks.l_node(i, i) - expect).abs());
    }
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn constant_coefficients_without_coupling() {
    let m = UniformDesignModel {
        length: 2.0,
        lambda_plus: [1.0, 2.0, 3.0],
        mu: 0.5,
        sigma_pp: Matrix3::zeros(),
        sigma_pm: Vector3::zeros(),
        sigma_mp: RowVector3::new(0.3, -0.6, 0.9),
        q0: Vector3::zeros(),
    };
    let ks = solve_kernels(&m, &KernelConfig { nodes: 41, ..KernelConfig::default() }).unwrap();
    let (k, l) = ks.eval(1.3, 0.4);
    for j in 0..3 {
        let expect = -m.sigma_mp[j] / (m.lambda_plus[j] + m.mu);
        assert!((k[j] - expect).abs() < 1e-14);
    }
    assert_eq!(l, 0.0);
}

#[test]
fn failure_modes() {
    let (_, _, _, rs) = common::benchmark();
    let few = KernelConfig {
        nodes: 51,
        tol: 1e-14,
        max_iter: 2,
    };
    assert!(matches!(
        solve_kernels(&rs, &few),
        Err(Error::KernelNonConvergence { iterations: 2, .. })
    ));
    let stiff = UniformDesignModel {
        length: 1.0,
        lambda_plus: [1.0, 1.0, 1.0],
        mu: 1.0,
        sigma_pp: Matrix3::repeat(50.0),
        sigma_pm: Vector3::repeat(50.0),
        sigma_mp: RowVector3::repeat(1.0),
        q0: Vector3::zeros(),
    };
    assert!(matches!(
        solve_kernels(&stiff, &KernelConfig { nodes: 5, ..KernelConfig::default() }),
        Err(Error::GridTooCoarse(_))
    ));
    let bad_tol = KernelConfig { tol: 0.0, ..few };
    assert!(solve_kernels(&rs, &bad_tol).unwrap_err().is_validation());
}
