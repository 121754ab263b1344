mod common;

use common::{core_state, params_in_box};
use num_complex::Complex64;
use proptest::prelude::*;
use tbt_core::bifurcation::{detect_transcritical, linspace, sweep_branch};
use tbt_core::dynamics::{integrate, IntegratorOptions};
use tbt_core::equilibria::{
    classify, dfe_eigenvalues, disease_free_equilibrium, endemic_closed_form, newton_equilibrium,
};
use tbt_core::model::{jacobian_analytic, jacobian_fd, rhs_full, rhs_reduced, theta, FullSystem, ReducedSystem};
use tbt_core::{CoreState, Execution, FullState, ParamName};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn theta_is_bounded_by_the_risk_coefficients(p in params_in_box(), x in core_state(100.0)) {
        let state = CoreState::from_array(x);
        let th = theta(&state, &p).unwrap();
        let n = state.n();
        // exponent lies between -a1 and -a2 since I/N and U/N are fractions
        let expected = (-(p.a1 * state.i / n) - p.a2 * state.u / n).exp();
        prop_assert!(th > 0.0);
        prop_assert!((th - expected).abs() <= 1e-12 * expected.max(1.0));
        prop_assert!(th <= (-p.a2).exp() * (1.0 + 1e-12));
        prop_assert!(th >= (-p.a1).exp() * (1.0 - 1e-12));
    }

    #[test]
    fn infection_vanishes_on_the_disease_free_plane(p in params_in_box(), x in core_state(100.0)) {
        let state = CoreState::new(x[0], 0.0, x[2]);
        let f = rhs_reduced(&state, &p).unwrap();
        prop_assert_eq!(f.i, 0.0);
    }

    #[test]
    fn full_system_agrees_with_reduced_and_conserves(p in params_in_box(), x in core_state(1.0)) {
        let core = CoreState::from_array(x.map(|v| v * p.t_total));
        let full = FullState::from_core(core, p.t_total);
        let ff = rhs_full(&full, &p).unwrap();
        let fr = rhs_reduced(&core, &p).unwrap();
        let scale = p.t_total * 10.0;
        prop_assert!((ff.s - fr.s).abs() <= 1e-12 * scale);
        prop_assert!((ff.i - fr.i).abs() <= 1e-12 * scale);
        prop_assert!((ff.u - fr.u).abs() <= 1e-12 * scale);
        prop_assert!((ff.p + ff.s + ff.i + ff.u).abs() <= 1e-12 * scale);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences(p in params_in_box(), x in core_state(1.0)) {
        let x = x.map(|v| v * p.t_total);
        let a = jacobian_analytic(&CoreState::from_array(x), &p).unwrap();
        let fd = jacobian_fd(&ReducedSystem { params: p }, &x, 1e-6).unwrap();
        let scale = a.amax().max(1.0);
        prop_assert!((a - fd).amax() <= 1e-5 * scale, "analytic {a} fd {fd}");
    }

    #[test]
    fn dfe_spectrum_matches_closed_form(p in params_in_box()) {
        let e0 = disease_free_equilibrium(&p);
        let a = jacobian_analytic(&e0.coords, &p).unwrap();
        let mut want = dfe_eigenvalues(&p);
        want.sort_by(f64::total_cmp);
        let mut diag = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
        diag.sort_by(f64::total_cmp);
        // at E0 the I and U rows only involve I and U, so the diagonal carries the spectrum
        let mut got: Vec<f64> = tbt_core::linalg::eigenvalues_3x3(&a).iter().map(|z| z.re).collect();
        got.sort_by(f64::total_cmp);
        for k in 0..3 {
            prop_assert!((got[k] - want[k]).abs() <= 1e-9, "{got:?} vs {want:?}");
            prop_assert!((diag[k] - want[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn classification_ignores_time_rescaling(
        re in prop::array::uniform3(-2.0..2.0f64),
        im in 0.0..2.0f64,
        c in 0.01..100.0f64,
        complex in any::<bool>(),
    ) {
        let ev = if complex {
            [Complex64::new(re[0], im), Complex64::new(re[0], -im), Complex64::new(re[2], 0.0)]
        } else {
            re.map(|r| Complex64::new(r, 0.0))
        };
        prop_assert_eq!(classify(&ev), classify(&ev.map(|z| z * c)));
    }

    #[test]
    fn disease_free_plane_is_invariant_under_the_flow(p in params_in_box(), x in core_state(1.0)) {
        let x0 = [x[0] * p.t_total, 0.0, x[2] * p.t_total];
        let tr = integrate(&ReducedSystem { params: p }, x0, (0.0, 20.0), IntegratorOptions::for_model(&p)).unwrap();
        prop_assert!(tr.states.iter().all(|s| s[1] == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn endemic_closed_form_is_a_root(p in params_in_box()) {
        let Ok(Some(sol)) = endemic_closed_form(&p) else { return Ok(()) };
        prop_assume!(sol.closed_form_consistent);
        let cf = sol.closed_form;
        prop_assert!(sol.closed_form_residual <= 1e-6 * p.t_total);
        let refined = newton_equilibrium(&cf, &p, 1e-12 * p.t_total, 50);
        if let Ok(e) = refined {
            let moved = e.coords.max_abs_diff(&cf);
            prop_assert!(moved <= 1e-6 * cf.s.max(cf.i).max(cf.u).max(1e-300), "moved {moved}");
        }
    }

    #[test]
    fn total_population_is_conserved_along_the_full_flow(p in params_in_box(), x in core_state(1.0)) {
        let core = CoreState::from_array(x.map(|v| v * p.t_total));
        let x0 = FullState::from_core(core, p.t_total).to_array();
        let mut opts = IntegratorOptions::for_model(&p);
        opts.nonnegative = true;
        let tr = integrate(&FullSystem { params: p }, x0, (0.0, 20.0), opts).unwrap();
        for s in &tr.states {
            let total: f64 = s.iter().sum();
            prop_assert!((total - p.t_total).abs() <= 1e-8 * p.t_total);
        }
    }
}

#[test]
fn transcritical_detection_is_deterministic() {
    let p = tbt_core::ModelParams::baseline();
    let values = linspace(0.40, 0.50, 101);
    let seq = sweep_branch(&p, ParamName::Beta, &values, Execution::Sequential);
    let par = sweep_branch(&p, ParamName::Beta, &values, Execution::Parallel);
    assert_eq!(seq, par);
    let a = detect_transcritical(&p, ParamName::Beta, &seq).unwrap();
    let b = detect_transcritical(&p, ParamName::Beta, &par).unwrap();
    assert_eq!(a, b);
    assert!((a.critical_value - (p.mu + p.tau)).abs() <= 1e-10 * (p.mu + p.tau));
}
