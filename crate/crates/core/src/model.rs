//! State types, the recruitment function and the vector fields of the full
//! (P, S, I, U) and reduced (S, I, U) systems.

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Default relative step of the finite-difference Jacobian.
pub const FD_JACOBIAN_STEP: f64 = 1e-5;

/// Core-group state: susceptibles, infectious and treated individuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoreState {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "U")]
    pub u: f64,
}

impl CoreState {
    pub const fn new(s: f64, i: f64, u: f64) -> Self {
        CoreState { s, i, u }
    }

    /// Core-group size N = S + I + U.
    #[inline]
    pub fn n(&self) -> f64 {
        self.s + self.i + self.u
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.s, self.i, self.u]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        CoreState::new(x[0], x[1], x[2])
    }

    pub fn max_abs_diff(&self, other: &CoreState) -> f64 {
        (self.s - other.s)
            .abs()
            .max((self.i - other.i).abs())
            .max((self.u - other.u).abs())
    }

    pub fn distance(&self, other: &CoreState) -> f64 {
        let (ds, di, du) = (self.s - other.s, self.i - other.i, self.u - other.u);
        (ds * ds + di * di + du * du).sqrt()
    }
}

/// State of the four-dimensional model including the non-core population P.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FullState {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "U")]
    pub u: f64,
}

impl FullState {
    pub const fn new(p: f64, s: f64, i: f64, u: f64) -> Self {
        FullState { p, s, i, u }
    }

    /// Embed a core state, filling P so that P + N = T.
    pub fn from_core(x: CoreState, t_total: f64) -> Self {
        FullState::new(t_total - x.n(), x.s, x.i, x.u)
    }

    pub fn core(&self) -> CoreState {
        CoreState::new(self.s, self.i, self.u)
    }

    pub fn total(&self) -> f64 {
        self.p + self.s + self.i + self.u
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.p, self.s, self.i, self.u]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        FullState::new(x[0], x[1], x[2], x[3])
    }
}

/// An autonomous vector field on R^D.
pub trait VectorField<const D: usize> {
    fn eval(&self, x: &[f64; D]) -> Result<[f64; D]>;
}

impl<const D: usize, F> VectorField<D> for F
where
    F: Fn(&[f64; D]) -> Result<[f64; D]>,
{
    fn eval(&self, x: &[f64; D]) -> Result<[f64; D]> {
        self(x)
    }
}

/// The reduced (S, I, U) system as a [`VectorField`].
#[derive(Debug, Clone, Copy)]
pub struct ReducedSystem {
    pub params: ModelParams,
}

impl VectorField<3> for ReducedSystem {
    fn eval(&self, x: &[f64; 3]) -> Result<[f64; 3]> {
        rhs_reduced(&CoreState::from_array(*x), &self.params).map(CoreState::to_array)
    }
}

/// The full (P, S, I, U) system as a [`VectorField`].
#[derive(Debug, Clone, Copy)]
pub struct FullSystem {
    pub params: ModelParams,
}

impl VectorField<4> for FullSystem {
    fn eval(&self, x: &[f64; 4]) -> Result<[f64; 4]> {
        rhs_full(&FullState::from_array(*x), &self.params).map(FullState::to_array)
    }
}

#[inline]
fn core_size(s: f64, i: f64, u: f64) -> Result<f64> {
    let n = s + i + u;
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::Domain(format!("core group size N = {n} must be positive")))
    }
}

/// Recruitment rate exp(-(a1 I + a2 U) / N).
pub fn theta(state: &CoreState, params: &ModelParams) -> Result<f64> {
    let n = core_size(state.s, state.i, state.u)?;
    Ok(theta_with_n(state.i, state.u, n, params))
}

#[inline]
fn theta_with_n(i: f64, u: f64, n: f64, params: &ModelParams) -> f64 {
    (-(params.a1 * i + params.a2 * u) / n).exp()
}

/// Right-hand side of the reduced system, with P = T - N.
pub fn rhs_reduced(state: &CoreState, params: &ModelParams) -> Result<CoreState> {
    let CoreState { s, i, u } = *state;
    let n = core_size(s, i, u)?;
    let th = theta_with_n(i, u, n, params);
    let p = params.t_total - n;
    let bh = params.beta_hat();

    let ds = th * p - params.beta * s * i / n - params.mu * s + params.gamma * u;
    let di = (params.beta * s + bh * u) * i / n - (params.mu + params.tau) * i;
    let du = params.tau * i - bh * u * i / n - (params.mu + params.gamma) * u;
    Ok(CoreState::new(ds, di, du))
}

/// Right-hand side of the full four-dimensional system.
pub fn rhs_full(state: &FullState, params: &ModelParams) -> Result<FullState> {
    let FullState { p, s, i, u } = *state;
    let n = core_size(s, i, u)?;
    let th = theta_with_n(i, u, n, params);
    let bh = params.beta_hat();

    let dp = params.b * (p + s) + params.b_hat * (i + u) - (th + params.mu) * p;
    let ds = th * p - params.beta * s * i / n - params.mu * s + params.gamma * u;
    let di = (params.beta * s + bh * u) * i / n - (params.mu + params.tau) * i;
    let du = params.tau * i - bh * u * i / n - (params.mu + params.gamma) * u;
    Ok(FullState::new(dp, ds, di, du))
}

/// Jacobian of [`rhs_reduced`], including the dependence of theta and P on
/// every coordinate through N.
pub fn jacobian_analytic(state: &CoreState, params: &ModelParams) -> Result<Matrix3<f64>> {
    let CoreState { s, i, u } = *state;
    let n = core_size(s, i, u)?;
    let n2 = n * n;
    let th = theta_with_n(i, u, n, params);
    let p = params.t_total - n;
    let (beta, bh) = (params.beta, params.beta_hat());
    let (mu, gamma, tau) = (params.mu, params.gamma, params.tau);

    // exponent e = k / N with theta = exp(-e)
    let k = params.a1 * i + params.a2 * u;
    let th_s = th * k / n2;
    let th_i = -th * (params.a1 / n - k / n2);
    let th_u = -th * (params.a2 / n - k / n2);

    let sin2 = beta * s * i / n2;
    let g = beta * s + bh * u;
    let gin2 = g * i / n2;
    let uin2 = bh * u * i / n2;

    Ok(Matrix3::new(
        th_s * p - th - beta * i / n + sin2 - mu,
        th_i * p - th - beta * s / n + sin2,
        th_u * p - th + sin2 + gamma,
        beta * i / n - gin2,
        g / n - gin2 - (mu + tau),
        bh * i / n - gin2,
        uin2,
        tau - bh * u / n + uin2,
        -bh * i / n + uin2 - (mu + gamma),
    ))
}

/// Central-difference Jacobian with per-column step `step * (1 + |x_j|)`.
pub fn jacobian_fd<const D: usize, F: VectorField<D> + ?Sized>(
    field: &F,
    x: &[f64; D],
    step: f64,
) -> Result<SMatrix<f64, D, D>> {
    let mut jac = SMatrix::<f64, D, D>::zeros();
    for j in 0..D {
        let h = step * (1.0 + x[j].abs());
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let fp = field.eval(&xp)?;
        let fm = field.eval(&xm)?;
        let width = xp[j] - xm[j];
        for r in 0..D {
            jac[(r, j)] = (fp[r] - fm[r]) / width;
        }
    }
    Ok(jac)
}
