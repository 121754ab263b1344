#![allow(dead_code)]

use proptest::prelude::*;
use tbt_core::ModelParams;

/// Parameters drawn from the biological box, with b = b_hat = mu.
pub fn params_in_box() -> impl Strategy<Value = ModelParams> {
    (
        (0.0..10.0f64, -10.0..=0.0f64, 0.01..=1.0f64, 0.0..=1.0f64),
        (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 1.0..1000.0f64),
    )
        .prop_map(|((a1, a2, beta, eta), (gamma, mu, tau, t_total))| ModelParams {
            a1,
            a2,
            beta,
            eta,
            gamma,
            mu,
            tau,
            b: mu,
            b_hat: mu,
            t_total,
        })
}

/// A state with positive core group size, scaled to the population.
pub fn core_state(t_total: f64) -> impl Strategy<Value = [f64; 3]> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.01..=1.0f64).prop_map(move |(s, i, u, frac)| {
        let sum = (s + i + u).max(1e-3);
        let n = frac * t_total;
        [
            n * (s + 1e-3) / (sum + 3e-3),
            n * (i + 1e-3) / (sum + 3e-3),
            n * (u + 1e-3) / (sum + 3e-3),
        ]
    })
}
