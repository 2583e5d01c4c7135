use hangstring_core::bvp::{solve_sturm, SturmProblem};
use hangstring_core::discmap::equivalence_ratio;
use hangstring_core::energy::physical_energy;
use hangstring_core::evolution::{solve_ibvp_with, Coefficients, SolveOptions};
use hangstring_core::family::eval_profile;
use hangstring_core::mesh::{derivative, inner, make_mesh, GridFn, Mesh};
use hangstring_core::norms::{apply_averaging, xnorm, ynorm};
use proptest::prelude::*;
use std::sync::Arc;

fn profile(mesh: &Arc<Mesh>, a: &[f64], shift: f64, vanish: bool) -> GridFn {
    GridFn::from_scalar_fn(mesh, |s| eval_profile(a, shift, s, vanish))
}

fn coeffs() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-1.0f64..1.0, 1..7), 0.0f64..6.3)
}

// few modes, so the data honour the boundary tolerance on a coarse mesh
fn low_modes() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-1.0f64..1.0, 1..4), 0.0f64..6.3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norm_identity_holds((a, shift) in coeffs(), m in 0usize..4) {
        let mesh = make_mesh(128, 1.0).unwrap();
        let u = profile(&mesh, &a, shift, false);
        let du = derivative(&u, 1).unwrap();
        let lhs = xnorm(&u, m + 1).unwrap().powi(2);
        let rhs = inner(&u, &u) + ynorm(&du, m).unwrap().powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-300));
    }

    #[test]
    fn averaging_is_bounded((a, shift) in coeffs(), m in 0usize..3) {
        let mesh = make_mesh(256, 1.0).unwrap();
        let u = profile(&mesh, &a, shift, false);
        let nu = xnorm(&u, m).unwrap();
        prop_assume!(nu > 1e-8);
        prop_assert!(xnorm(&apply_averaging(&u).unwrap(), m).unwrap() <= 2.1 * nu);
    }

    #[test]
    fn sturm_solution_is_linear((a, shift) in coeffs(), b in -3.0f64..3.0, k in -2.0f64..2.0) {
        let mesh = make_mesh(64, 1.0).unwrap();
        let c = profile(&mesh, &a, shift, false).map(f64::abs);
        let h = profile(&mesh, &a, shift + 1.0, false);
        let one = solve_sturm(&SturmProblem::new(c.clone(), h.clone(), b)).unwrap();
        let scaled = solve_sturm(&SturmProblem::new(c, h.scaled(k), b * k)).unwrap();
        prop_assert!((&scaled - &one.scaled(k)).max_abs() <= 1e-10 * (1.0 + one.max_abs()));
    }

    #[test]
    fn disc_ratio_is_positive_and_finite((a, shift) in coeffs(), m in 0usize..3) {
        let mesh = make_mesh(128, 1.0).unwrap();
        let u = profile(&mesh, &a, shift, false);
        prop_assume!(xnorm(&u, m).unwrap() > 1e-8);
        let r = equivalence_ratio(&u, m).unwrap();
        prop_assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn conservative_energy_is_kept((a, shift) in low_modes(), (b, tilt) in low_modes()) {
        let mesh = make_mesh(64, 1.0).unwrap();
        let c = Coefficients::hanging_chain(1, 1.0);
        let u0 = profile(&mesh, &a, shift, true);
        let u1 = profile(&mesh, &b, tilt, true);
        let opts = SolveOptions { compat_tol: Some(1e-2), ..SolveOptions::default() };
        let tr = solve_ibvp_with(&c, &u0, &u1, 0.0, 0.5, 1e-2, &opts, None).unwrap();
        let e0 = physical_energy(&tr.snapshots[0], &c);
        prop_assume!(e0 > 1e-10);
        for s in &tr.snapshots {
            prop_assert!((physical_energy(s, &c) - e0).abs() <= 1e-10 * e0);
        }
    }
}
