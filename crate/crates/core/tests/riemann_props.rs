mod common;

use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;

use twoclass_ar::controller::FeedbackGains;
use twoclass_ar::kernel::{solve_kernels, KernelConfig};
use twoclass_ar::riemann::RiemannSystem;
use twoclass_ar::sim::{initial_perturbation, uniform_nodes};
use twoclass_ar::DesignModel;

fn vec4() -> impl Strategy<Value = Vector4<f64>> {
    prop::array::uniform4(-1.0..1.0_f64).prop_map(Vector4::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn round_trip_is_identity(z in vec4(), f in 0.0..1.0_f64) {
        let (p, _, _, rs) = common::benchmark();
        let x = f * p.length;
        let back = rs.from_riemann_matrix(x) * (rs.to_riemann_matrix(x) * z);
        prop_assert!((back - z).amax() < 1e-12 * z.amax().max(1e-300));
        let w = rs.to_riemann_matrix(x) * z;
        let again = rs.to_riemann_matrix(x) * (rs.from_riemann_matrix(x) * w);
        prop_assert!((again - w).amax() < 1e-12 * w.amax());
    }

    #[test]
    fn sigma_has_no_diagonal(f in 0.0..1.0_f64) {
        let (p, _, _, rs) = common::benchmark();
        let x = f * p.length;
        let s = rs.sigma(x);
        for i in 0..4 {
            prop_assert!(s[(i, i)].abs() < 1e-14);
        }
        let spp = rs.sigma_pp(x);
        for i in 0..3 {
            prop_assert!(spp[(i, i)].abs() < 1e-14);
        }
    }

    /// The inlet rows of the physical boundary conditions vanish on
    /// `w(0) = Q0 w4(0)`, and the outlet flow equals the input.
    #[test]
    fn boundary_reconstruction(w4 in -10.0..10.0_f64, wl in prop::array::uniform3(-10.0..10.0_f64), u in -5.0..5.0_f64) {
        let (p, eq, _, rs) = common::benchmark();
        let q0 = rs.q0_bar();
        let w_in = Vector4::new(q0[0] * w4, q0[1] * w4, q0[2] * w4, w4);
        let z0 = rs.from_riemann_matrix(0.0) * w_in;
        let scale = w4.abs().max(1.0);
        prop_assert!(z0[0].abs() < 1e-10 * scale);
        prop_assert!(z0[2].abs() < 1e-10 * scale);
        prop_assert!((eq.flow_row() * z0)[0].abs() < 1e-10 * scale);

        let wl = Vector3::from(wl);
        let w_out = Vector4::new(wl[0], wl[1], wl[2], rs.outlet_value(&wl, u));
        let zl = rs.from_riemann_matrix(p.length) * w_out;
        prop_assert!(((eq.flow_row() * zl)[0] - u).abs() < 1e-10 * (u.abs() + wl.amax()).max(1.0));
    }
}

/// Each coupling coefficient is a constant times an exponential in `x`.
#[test]
fn sigma_pp_bounded_and_sign_constant() {
    let (p, _, _, rs) = common::benchmark();
    let xs = uniform_nodes(1000, p.length);
    let first = rs.sigma_pp(0.0);
    for &x in &xs {
        let s = rs.sigma_pp(x);
        assert!(s.iter().all(|v| v.is_finite() && v.abs() < 1.0));
        for (a, b) in s.iter().zip(first.iter()) {
            assert!(a * b > 0.0 || (*a == 0.0 && *b == 0.0));
        }
    }
}

#[test]
fn slice_transforms_check_lengths() {
    let (p, _, _, rs) = common::benchmark();
    let xs = uniform_nodes(10, p.length);
    let z = vec![Vector4::zeros(); 5];
    assert!(rs.to_riemann(&xs, &z).is_err());
    assert!(rs.from_riemann(&xs, &z).is_err());
}

fn initial_control(rs: &RiemannSystem, eq: &twoclass_ar::EquilibriumState) -> f64 {
    let cfg = KernelConfig {
        nodes: 51,
        tol: 1e-12,
        max_iter: 500,
    };
    let ks = solve_kernels(rs, &cfg).unwrap();
    let xs = uniform_nodes(50, rs.length());
    let g = FeedbackGains::build(rs, &ks, &xs).unwrap();
    g.control_input(&initial_perturbation(eq, &xs, rs.length())).unwrap()
}

/// The physical input does not depend on how the eigenvectors are normalized.
#[test]
fn control_invariant_under_column_scaling() {
    let (p, eq, cb, rs) = common::benchmark();
    let u = initial_control(&rs, &eq);
    assert!(u.abs() > 1e-6);
    for scale in [[2.0, 0.5, -1.0, 1.5], [-0.7, 1.3, 0.9, -2.0], [1.0, 1.0, 1.0, 3.0]] {
        let cb2 = cb.with_column_scaling(&eq, scale).unwrap();
        let rs2 = RiemannSystem::build(&eq, &cb2, p.length).unwrap();
        assert!((rs2.kappa() - rs.kappa() * scale[rs.slots()[3]]).abs() < 1e-12);
        let u2 = initial_control(&rs2, &eq);
        assert!((u2 - u).abs() < 1e-9 * u.abs(), "{u} vs {u2}");
    }
}
