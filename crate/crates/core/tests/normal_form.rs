use nalgebra::Matrix3;
use tbt_core::bifurcation::locate_tbt_point;
use tbt_core::error::Result;
use tbt_core::normal_form::{
    bt_quadratic_coeffs, bt_quadratic_coeffs_with, jordan_chains, quadratic_coeffs, reduced_fit_oracle,
    stable_direction, FitOptions, NormalFormOptions, DEFAULT_B_STEP,
};
use tbt_core::{Execution, ModelParams};

fn toy(x: &[f64; 3]) -> Result<[f64; 3]> {
    Ok([x[1], x[0] * x[0] + x[0] * x[1], -x[2]])
}

fn toy_jacobian() -> Matrix3<f64> {
    Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0)
}

fn tbt_params() -> ModelParams {
    locate_tbt_point(&ModelParams::baseline()).unwrap().params
}

#[test]
fn toy_coefficients_from_both_methods() {
    let opts = NormalFormOptions::with_scale(1.0);
    let r = bt_quadratic_coeffs_with(&toy, &[0.0; 3], &toy_jacobian(), -1.0, &opts).unwrap();
    assert!((r.a2_coeff - 1.0).abs() < 1e-6);
    assert!((r.b2_coeff - 1.0).abs() < 1e-6);
    let fit = r.fit.unwrap();
    assert!((fit.a2 - 1.0).abs() < 1e-3);
    assert!((fit.b2 - 1.0).abs() < 1e-3);
}

#[test]
fn coefficients_scale_with_the_chain_normalization() {
    let p = tbt_params();
    let e0 = tbt_core::equilibria::disease_free_equilibrium(&p).coords.to_array();
    let a = tbt_core::model::jacobian_analytic(&tbt_core::CoreState::from_array(e0), &p).unwrap();
    let field = tbt_core::model::ReducedSystem { params: p };
    let chains = jordan_chains(&a, -(p.mu + 1.0)).unwrap();
    let (a2, b2) = quadratic_coeffs(&field, &e0, &chains, DEFAULT_B_STEP).unwrap();
    for c in [0.5, 2.0] {
        let (a2c, b2c) = quadratic_coeffs(&field, &e0, &chains.rescaled(c), DEFAULT_B_STEP).unwrap();
        assert!(
            (b2c - c * b2).abs() <= 1e-6 * (c * b2).abs(),
            "c = {c}: {b2c} vs {}",
            c * b2
        );
        assert!((a2c - c * a2).abs() <= 1e-6 * b2.abs());
    }
}

#[test]
fn tbt_chains_and_coefficients() {
    let p = tbt_params();
    assert_eq!((p.gamma, p.mu, p.b, p.b_hat), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(p.beta, p.tau);
    let r = bt_quadratic_coeffs(&p).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for (got, want) in r.chains.q0.iter().zip([s, 0.0, -s]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!(r.chains.residuals.max() <= 1e-10);
    assert!(r.chains.max_biorthogonality_error() <= 1e-10);
    assert!(r.a2_is_zero, "a2 = {} tol {}", r.a2_coeff, r.a2_zero_tol);
    assert!(
        (r.b2_coeff - 5.7982756057e-6).abs() < 1e-6 * 5.8e-6,
        "b2 = {}",
        r.b2_coeff
    );
    assert!(r.richardson.rel_change < 1e-6);
    assert!(r.homological_residual < 1e-12);
    assert!(!r.b2_flagged);
    assert!(r.b2_discrepancy.unwrap() < 1e-6);
}

#[test]
fn fit_is_stable_under_radius_halving() {
    let p = tbt_params();
    let e0 = tbt_core::equilibria::disease_free_equilibrium(&p).coords.to_array();
    let a = tbt_core::model::jacobian_analytic(&tbt_core::CoreState::from_array(e0), &p).unwrap();
    let field = tbt_core::model::ReducedSystem { params: p };
    let lambda0 = -(p.mu + 1.0);
    let chains = jordan_chains(&a, lambda0).unwrap();
    let stable = stable_direction(&a, lambda0).unwrap();
    let fit = |radius: f64| {
        let opts = FitOptions {
            radius,
            points: 11,
            exec: Execution::Sequential,
        };
        reduced_fit_oracle(&field, &e0, &chains, &stable, &opts).unwrap()
    };
    let (full, half) = (fit(0.1), fit(0.05));
    assert!(
        (full.b2 - half.b2).abs() <= 1e-3 * half.b2.abs(),
        "{} vs {}",
        full.b2,
        half.b2
    );
    // a2 stays at the noise level relative to b2
    assert!(full.a2.abs() <= 1e-3 * full.b2.abs());
    assert!(half.a2.abs() <= 1e-3 * half.b2.abs());
}

#[test]
fn parallel_fit_matches_sequential() {
    let p = tbt_params();
    let mut seq = NormalFormOptions::with_scale(p.t_total);
    let mut par = seq;
    seq.fit.as_mut().unwrap().exec = Execution::Sequential;
    par.fit.as_mut().unwrap().exec = Execution::Parallel;
    let a = tbt_core::normal_form::bt_quadratic_coeffs_opts(&p, &seq).unwrap();
    let b = tbt_core::normal_form::bt_quadratic_coeffs_opts(&p, &par).unwrap();
    assert_eq!(a, b);
}
