//! Disease-free and endemic equilibria, the reproduction number, and
//! eigenvalue-based stability classification.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_3x3, singular_values3};
use crate::model::{jacobian_analytic, rhs_reduced, CoreState};
use crate::params::ModelParams;

/// Absolute tolerance on Re λ below which an equilibrium is nonhyperbolic.
pub const HYPERBOLICITY_TOL: f64 = 1e-9;
/// Equilibrium residual tolerance, relative to `T_total`.
pub const EQUILIBRIUM_TOL_REL: f64 = 1e-8;
/// An equilibrium is labelled endemic when I exceeds this fraction of `T_total`.
pub const FEASIBILITY_REL: f64 = 1e-10;
/// R0 - 1 must exceed this for an endemic equilibrium to be reported.
pub const ENDEMIC_DELTA_TOL: f64 = 1e-12;

const NEWTON_MAX_HALVINGS: u32 = 30;
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    DiseaseFree,
    Endemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    StableNode,
    StableFocus,
    Saddle,
    UnstableNode,
    UnstableFocus,
    Nonhyperbolic,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::StableNode => "stable-node",
            Stability::StableFocus => "stable-focus",
            Stability::Saddle => "saddle",
            Stability::UnstableNode => "unstable-node",
            Stability::UnstableFocus => "unstable-focus",
            Stability::Nonhyperbolic => "nonhyperbolic",
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::StableNode | Stability::StableFocus)
    }
}

/// How an equilibrium was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    ClosedForm,
    Newton,
    /// The closed form failed its residual check and Newton took over.
    NewtonFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub coords: CoreState,
    pub kind: EquilibriumKind,
    #[serde(with = "crate::serde_complex")]
    pub eigenvalues: [Complex64; 3],
    pub stability: Stability,
    /// Max-norm of the vector field at `coords`.
    pub residual: f64,
    pub source: Source,
}

impl Equilibrium {
    fn build(coords: CoreState, params: &ModelParams, source: Source) -> Result<Self> {
        let residual = max_norm(&rhs_reduced(&coords, params)?);
        let eigenvalues = eigenvalues_3x3(&jacobian_analytic(&coords, params)?);
        Ok(Equilibrium {
            coords,
            kind: kind_of(&coords, params),
            eigenvalues,
            stability: classify(&eigenvalues),
            residual,
            source,
        })
    }
}

/// Quantities entering the endemic closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndemicConstants {
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    /// Ratio S1 / U1.
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
}

/// Endemic equilibrium together with the closed-form diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndemicSolution {
    pub equilibrium: Equilibrium,
    pub constants: EndemicConstants,
    /// The point given by the closed-form expressions, before any fallback.
    pub closed_form: CoreState,
    pub closed_form_residual: f64,
    /// False when the closed form failed the residual or feasibility check.
    pub closed_form_consistent: bool,
}

fn max_norm(x: &CoreState) -> f64 {
    x.s.abs().max(x.i.abs()).max(x.u.abs())
}

fn kind_of(x: &CoreState, params: &ModelParams) -> EquilibriumKind {
    if x.i > FEASIBILITY_REL * params.t_total {
        EquilibriumKind::Endemic
    } else {
        EquilibriumKind::DiseaseFree
    }
}

/// Basic reproduction number beta / (mu + tau).
pub fn r0(params: &ModelParams) -> Result<f64> {
    let v = params.mu + params.tau;
    if v == 0.0 {
        return Err(Error::Domain("R0 undefined for mu + tau = 0".into()));
    }
    Ok(params.beta / v)
}

/// Closed-form eigenvalues of the Jacobian at the disease-free equilibrium,
/// in the order (-(mu+1), beta-(mu+tau), -(mu+gamma)).
pub fn dfe_eigenvalues(params: &ModelParams) -> [f64; 3] {
    [
        -(params.mu + 1.0),
        params.beta - (params.mu + params.tau),
        -(params.mu + params.gamma),
    ]
}

/// The disease-free equilibrium (T/(mu+1), 0, 0). It exists for every
/// parameter set.
pub fn disease_free_equilibrium(params: &ModelParams) -> Equilibrium {
    let coords = CoreState::new(params.t_total / (params.mu + 1.0), 0.0, 0.0);
    let mut eigenvalues = dfe_eigenvalues(params).map(|l| Complex64::new(l, 0.0));
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re));
    let residual = rhs_reduced(&coords, params).map(|f| max_norm(&f)).unwrap_or(f64::NAN);
    Equilibrium {
        coords,
        kind: EquilibriumKind::DiseaseFree,
        eigenvalues,
        stability: classify(&eigenvalues),
        residual,
        source: Source::ClosedForm,
    }
}

/// R0, D0, C0 and C1 of the endemic closed form.
pub fn endemic_constants(params: &ModelParams) -> Result<EndemicConstants> {
    let r0 = r0(params)?;
    let ModelParams {
        eta: e,
        gamma: g,
        mu: m,
        tau: t,
        a1,
        a2,
        ..
    } = *params;
    if t == 0.0 {
        return Err(Error::Degenerate("tau = 0: C0 is undefined".into()));
    }
    if r0 == 1.0 {
        return Err(Error::Degenerate("R0 = 1: C0 is undefined".into()));
    }
    let mt = m + t;
    let lin = g + e * m - (e - 1.0) * r0 * mt;
    let d0 = 2.0 * t * (g * (2.0 * e - 1.0) + e * m + (e - 1.0) * r0 * mt) + lin * lin + t * t;
    if d0 < 0.0 {
        return Err(Error::Discriminant { d0 });
    }
    let sq = d0.sqrt();
    let c0 = (sq + g + e * m + t - r0 * (e - 1.0) * (m - t)) / (2.0 * t * (r0 - 1.0));
    let den = g + e * m + 2.0 * e * t + sq - e * r0 * mt + r0 * mt - t;
    let c1 = (r0 - 1.0) * (a1 * (g + e * m + sq - e * r0 * mt + r0 * mt - t) + 2.0 * a2 * t) / (r0 * den);
    Ok(EndemicConstants { r0, d0, c0, c1 })
}

/// Endemic equilibrium from the closed-form expressions for U1, S1 = C0 U1
/// and I1 = S1 (R0 - 1) + U1 (R0 (1 - eta) - 1).
///
/// Returns `Ok(None)` when R0 <= 1. If the closed-form point fails the
/// residual or feasibility check, Newton's method started from it supplies
/// the equilibrium and `closed_form_consistent` is false.
pub fn endemic_closed_form(params: &ModelParams) -> Result<Option<EndemicSolution>> {
    let r0v = r0(params)?;
    if r0v - 1.0 <= ENDEMIC_DELTA_TOL {
        return Ok(None);
    }
    let k = endemic_constants(params)?;
    let ModelParams {
        eta: e,
        gamma: g,
        mu: m,
        tau: t,
        t_total,
        ..
    } = *params;
    let r0 = k.r0;
    let sq = k.d0.sqrt();
    let u1 = 2.0 * t_total * (r0 - 1.0) * t
        / (r0 * (g + e * m + 2.0 * e * t + sq - (e - 1.0) * r0 * (m + t) - t) * (m * k.c1.exp() + 1.0));
    let s1 = k.c0 * u1;
    let i1 = s1 * (r0 - 1.0) + u1 * (r0 * (1.0 - e) - 1.0);
    let closed_form = CoreState::new(s1, i1, u1);

    let tol = EQUILIBRIUM_TOL_REL * t_total;
    let closed_form_residual = rhs_reduced(&closed_form, params)
        .map(|f| max_norm(&f))
        .unwrap_or(f64::INFINITY);
    let feasible = s1 > 0.0 && i1 > 0.0 && u1 > 0.0 && closed_form_residual.is_finite();

    let (equilibrium, consistent) = if feasible && closed_form_residual <= tol {
        (Equilibrium::build(closed_form, params, Source::ClosedForm)?, true)
    } else {
        let guess = if feasible {
            closed_form
        } else {
            // start from the DFE pushed into the interior
            let e0 = params.t_total / (params.mu + 1.0);
            CoreState::new(0.5 * e0, 0.1 * e0, 0.01 * e0)
        };
        let mut eq = newton_equilibrium(&guess, params, tol, 100)?;
        eq.source = Source::NewtonFallback;
        (eq, false)
    };
    Ok(Some(EndemicSolution {
        equilibrium,
        constants: k,
        closed_form,
        closed_form_residual,
        closed_form_consistent: consistent,
    }))
}

/// Damped Newton iteration on the reduced vector field.
///
/// Each step is halved up to 30 times until the iterate stays in the
/// nonnegative octant and the residual max-norm decreases.
pub fn newton_equilibrium(guess: &CoreState, params: &ModelParams, tol: f64, max_iter: usize) -> Result<Equilibrium> {
    let mut x = *guess;
    let mut f = rhs_reduced(&x, params)?;
    let mut res = max_norm(&f);

    for iter in 0..=max_iter {
        let jac = jacobian_analytic(&x, params)?;
        let sv = singular_values3(&jac);
        let ratio = if sv[0] > 0.0 { sv[2] / sv[0] } else { 0.0 };
        if ratio < SINGULAR_RATIO {
            return Err(Error::SingularJacobian { ratio });
        }
        if res <= tol {
            return Equilibrium::build(x, params, Source::Newton);
        }
        if iter == max_iter {
            break;
        }
        let rhs = -Vector3::new(f.s, f.i, f.u);
        let dx = jac.lu().solve(&rhs).ok_or(Error::SingularJacobian { ratio })?;

        let mut lambda = 1.0;
        let mut accepted = false;
        let mut saw_feasible = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let cand = CoreState::new(x.s + lambda * dx[0], x.i + lambda * dx[1], x.u + lambda * dx[2]);
            if cand.s >= 0.0 && cand.i >= 0.0 && cand.u >= 0.0 && cand.n() > 0.0 {
                saw_feasible = true;
                let fc = rhs_reduced(&cand, params)?;
                let rc = max_norm(&fc);
                if rc < res {
                    x = cand;
                    f = fc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if !saw_feasible {
                return Err(Error::NegativeCoordinate);
            }
            // Newton direction cannot reduce the residual any further
            if res <= tol {
                return Equilibrium::build(x, params, Source::Newton);
            }
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                residual: res,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

/// Stability class from eigenvalue signs, using [`HYPERBOLICITY_TOL`].
pub fn classify(eigenvalues: &[Complex64; 3]) -> Stability {
    classify_with_tol(eigenvalues, HYPERBOLICITY_TOL)
}

pub fn classify_with_tol(eigenvalues: &[Complex64; 3], eps: f64) -> Stability {
    if eigenvalues.iter().any(|z| z.re.abs() <= eps) {
        return Stability::Nonhyperbolic;
    }
    let has_pair = eigenvalues.iter().any(|z| z.im != 0.0);
    let n_neg = eigenvalues.iter().filter(|z| z.re < 0.0).count();
    match (n_neg, has_pair) {
        (3, false) => Stability::StableNode,
        (3, true) => Stability::StableFocus,
        (0, false) => Stability::UnstableNode,
        (0, true) => Stability::UnstableFocus,
        _ => Stability::Saddle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn r0_values() {
        let p = ModelParams::baseline();
        assert!((r0(&p).unwrap() - 2.2624).abs() < 1e-4);
        let mut q = p;
        q.beta = q.mu + q.tau;
        assert_eq!(r0(&q).unwrap(), 1.0);
        q.tau = 0.0;
        q.beta = 0.3;
        assert_eq!(r0(&q).unwrap(), 0.3 / q.mu);
        q.mu = 0.0;
        assert!(matches!(r0(&q), Err(Error::Domain(_))));
    }

    #[test]
    fn dfe_coordinates_and_class() {
        let p = ModelParams::baseline();
        let e0 = disease_free_equilibrium(&p);
        assert!((e0.coords.s - 69.444_444_444_444_44).abs() < 1e-10);
        assert_eq!(e0.stability, Stability::Saddle);
        let re: Vec<f64> = e0.eigenvalues.iter().map(|z| z.re).collect();
        assert!((re[0] - 0.558).abs() < 1e-12);
        assert!((re[1] + 0.9).abs() < 1e-12);
        assert!((re[2] + 1.44).abs() < 1e-12);

        let mut q = p;
        q.mu = 0.0;
        assert_eq!(disease_free_equilibrium(&q).coords, CoreState::new(100.0, 0.0, 0.0));
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify(&[c(0.558, 0.0), c(-0.9, 0.0), c(-1.44, 0.0)]),
            Stability::Saddle
        );
        assert_eq!(
            classify(&[c(-0.5, 0.2), c(-0.5, -0.2), c(-1.0, 0.0)]),
            Stability::StableFocus
        );
        assert_eq!(
            classify(&[c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
            Stability::Nonhyperbolic
        );
        assert_eq!(
            classify(&[c(-1.0, 0.0), c(-2.0, 0.0), c(-3.0, 0.0)]),
            Stability::StableNode
        );
        assert_eq!(
            classify(&[c(0.4, 0.1), c(0.4, -0.1), c(1.0, 0.0)]),
            Stability::UnstableFocus
        );
        assert_eq!(
            classify(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]),
            Stability::UnstableNode
        );
    }

    #[test]
    fn endemic_at_baseline() {
        let p = ModelParams::baseline();
        let sol = endemic_closed_form(&p).unwrap().unwrap();
        assert!(sol.closed_form_consistent);
        let e1 = sol.equilibrium;
        assert_eq!(e1.kind, EquilibriumKind::Endemic);
        assert!(e1.coords.i > 0.0);
        assert!(e1.residual <= 1e-6);
        // unstable complex pair plus one stable direction
        assert_eq!(e1.stability, Stability::Saddle);
        assert!(e1.eigenvalues[0].re > 0.0 && e1.eigenvalues[0].im != 0.0);

        let refined = newton_equilibrium(&e1.coords, &p, 1e-13, 3).unwrap();
        assert!(refined.coords.max_abs_diff(&e1.coords) <= 1e-8);
    }

    #[test]
    fn no_endemic_below_threshold() {
        let mut p = ModelParams::baseline();
        p.beta = 0.9 * (p.mu + p.tau);
        assert!(endemic_closed_form(&p).unwrap().is_none());
    }

    #[test]
    fn tau_zero_is_degenerate() {
        let mut p = ModelParams::baseline();
        p.tau = 0.0;
        assert!(matches!(endemic_constants(&p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn newton_finds_dfe_when_subcritical() {
        let mut p = ModelParams::baseline();
        p.beta = 0.3;
        let s0 = p.t_total / (p.mu + 1.0);
        let eq = newton_equilibrium(&CoreState::new(s0 + 3.0, 0.5, 0.2), &p, 1e-10, 50).unwrap();
        assert_eq!(eq.kind, EquilibriumKind::DiseaseFree);
        assert!((eq.coords.s - s0).abs() < 1e-8);
        assert!(eq.stability.is_stable());
    }

    #[test]
    fn newton_singular_at_organizing_point() {
        let mut p = ModelParams::baseline();
        p.gamma = 0.0;
        p.mu = 0.0;
        p.b = 0.0;
        p.b_hat = 0.0;
        p.beta = p.tau;
        let e0 = CoreState::new(p.t_total, 0.0, 0.0);
        assert!(matches!(
            newton_equilibrium(&e0, &p, 1e-10, 20),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn newton_reports_non_convergence() {
        let p = ModelParams::baseline();
        let e1 = endemic_closed_form(&p).unwrap().unwrap().equilibrium.coords;
        let guess = CoreState::new(e1.s * 3.0, e1.i * 2.0, e1.u * 5.0);
        assert!(matches!(
            newton_equilibrium(&guess, &p, 1e-14, 0),
            Err(Error::NoConvergence { .. })
        ));
    }
}
