//! One-parameter scans, the transcritical threshold, Hopf points and the
//! double-zero organizing point.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::Serialize;

use crate::equilibria::{
    classify, disease_free_equilibrium, endemic_closed_form, endemic_constants, r0, Equilibrium, Stability,
};
use crate::error::{Error, Result};
use crate::exec::{map_ordered, Execution};
use crate::linalg::eigenvalues_3x3;
use crate::model::{jacobian_analytic, rhs_reduced, CoreState};
use crate::normal_form::{jordan_chains, JordanChains};
use crate::params::{ModelParams, ParamName};

/// Distance (R0 - 1, gamma + mu) from the organizing point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnfoldingParams {
    pub delta1: f64,
    pub delta2: f64,
}

pub fn unfolding(params: &ModelParams) -> Result<UnfoldingParams> {
    Ok(UnfoldingParams {
        delta1: r0(params)? - 1.0,
        delta2: params.gamma + params.mu,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndemicBranchPoint {
    pub coords: CoreState,
    #[serde(with = "crate::serde_complex")]
    pub eigenvalues: [Complex64; 3],
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchRow {
    pub value: f64,
    #[serde(rename = "R0")]
    pub r0: Option<f64>,
    pub dfe_class: Stability,
    pub endemic: Option<EndemicBranchPoint>,
    /// Sign of D0 (-1, 0, 1), absent where D0 is undefined.
    pub d0_sign: Option<i8>,
    /// Error met while evaluating this row; the sweep carries on.
    pub error: Option<String>,
}

fn branch_row(base: &ModelParams, param: ParamName, value: f64) -> BranchRow {
    let p = base.with(param, value);
    let dfe = disease_free_equilibrium(&p);
    let mut row = BranchRow {
        value,
        r0: None,
        dfe_class: dfe.stability,
        endemic: None,
        d0_sign: None,
        error: None,
    };
    if !value.is_finite() {
        row.error = Some(format!("{param} = {value} is not finite"));
        return row;
    }
    match r0(&p) {
        Ok(v) => row.r0 = Some(v),
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    row.d0_sign = match endemic_constants(&p) {
        Ok(k) => Some(if k.d0 > 0.0 {
            1
        } else if k.d0 < 0.0 {
            -1
        } else {
            0
        }),
        Err(Error::Discriminant { .. }) => Some(-1),
        Err(_) => None,
    };
    match endemic_closed_form(&p) {
        Ok(Some(sol)) => {
            let e = sol.equilibrium;
            row.endemic = Some(EndemicBranchPoint {
                coords: e.coords,
                eigenvalues: e.eigenvalues,
                stability: e.stability,
            });
        }
        Ok(None) => {}
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Evaluate every value independently; rows come back in input order.
pub fn sweep_branch(params: &ModelParams, param: ParamName, values: &[f64], exec: Execution) -> Vec<BranchRow> {
    map_ordered(values, exec, |&v| branch_row(params, param, v))
}

/// `count` evenly spaced values from `from` to `to` inclusive.
pub fn linspace(from: f64, to: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..count)
            .map(|k| {
                if k == count - 1 {
                    to
                } else {
                    from + (to - from) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityCheck {
    pub delta1: f64,
    pub value: f64,
    /// Max-norm distance between E1 and E0.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriticalReport {
    pub param: ParamName,
    pub critical_value: f64,
    /// Bracketing rows from the sweep.
    pub row_bracket: (f64, f64),
    pub bisection_width: f64,
    pub iterations: usize,
    pub dfe_below: Stability,
    pub dfe_above: Stability,
    /// E1 - E0 distances at delta1 = 1e-2, 1e-3, 1e-4.
    pub continuity: Vec<ContinuityCheck>,
    pub continuity_ok: bool,
}

fn delta1_at(base: &ModelParams, param: ParamName, v: f64) -> Result<f64> {
    Ok(r0(&base.with(param, v))? - 1.0)
}

/// Bisection for delta1(v) = target inside [lo, hi], to 1e-10 relative width.
fn bisect_delta1(
    base: &ModelParams,
    param: ParamName,
    mut lo: f64,
    mut hi: f64,
    target: f64,
) -> Result<(f64, f64, usize)> {
    let f = |v: f64| delta1_at(base, param, v).map(|d| d - target);
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok((lo, 0.0, 0));
    }
    if fhi == 0.0 {
        return Ok((hi, 0.0, 0));
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoCrossing { t_max: hi });
    }
    let mut it = 0;
    while (hi - lo).abs() > 1e-10 * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) && it < 200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok((mid, 0.0, it + 1));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        it += 1;
    }
    Ok((0.5 * (lo + hi), (hi - lo).abs(), it))
}

/// Locate where delta1 changes sign along a monotone sweep, refine the
/// critical value by bisection and check that the endemic branch merges
/// into E0 there.
pub fn detect_transcritical(params: &ModelParams, param: ParamName, rows: &[BranchRow]) -> Result<TranscriticalReport> {
    let pair = rows.windows(2).find(|w| match (w[0].r0, w[1].r0) {
        (Some(a), Some(b)) => (a - 1.0) * (b - 1.0) <= 0.0 && a != b,
        _ => false,
    });
    let Some(w) = pair else {
        let t_max = rows.last().map(|r| r.value).unwrap_or(f64::NAN);
        return Err(Error::NoCrossing { t_max });
    };
    let (a, b) = (w[0].value, w[1].value);
    let (critical, width, iterations) = bisect_delta1(params, param, a, b, 0.0)?;

    // point the bracket towards the R0 > 1 side for the continuity check
    let (sub, sup) = if delta1_at(params, param, a)? < 0.0 {
        (a, b)
    } else {
        (b, a)
    };
    let mut continuity = Vec::new();
    for d in [1e-2, 1e-3, 1e-4] {
        let far = if delta1_at(params, param, sup)? >= d {
            sup
        } else {
            // extend beyond the sweep bracket if it is too narrow
            let step = sup - critical;
            let mut v = sup;
            let mut found = false;
            for _ in 0..60 {
                v += step;
                if delta1_at(params, param, v)? >= d {
                    found = true;
                    break;
                }
            }
            if !found {
                continue;
            }
            v
        };
        let (v, _, _) = bisect_delta1(params, param, critical, far, d)?;
        let p = params.with(param, v);
        let e0 = disease_free_equilibrium(&p).coords;
        let distance = match endemic_closed_form(&p)? {
            Some(sol) => sol.equilibrium.coords.max_abs_diff(&e0),
            None => f64::NAN,
        };
        continuity.push(ContinuityCheck {
            delta1: d,
            value: v,
            distance,
        });
    }
    let continuity_ok = continuity.len() == 3
        && continuity.windows(2).all(|w| w[1].distance < w[0].distance)
        && continuity
            .iter()
            .find(|c| c.delta1 == 1e-4)
            .is_some_and(|c| c.distance <= 1e-2 * params.t_total);

    Ok(TranscriticalReport {
        param,
        critical_value: critical,
        row_bracket: (a, b),
        bisection_width: width,
        iterations,
        dfe_below: disease_free_equilibrium(&params.with(param, sub)).stability,
        dfe_above: disease_free_equilibrium(&params.with(param, sup)).stability,
        continuity,
        continuity_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfPoint {
    pub value: f64,
    pub coords: [f64; 3],
    /// Eigenvalue of the pair with positive imaginary part.
    #[serde(with = "crate::serde_complex::single")]
    pub pair: Complex64,
    pub omega: f64,
    pub bracket_width: f64,
    pub iterations: usize,
    /// Model equilibrium at the critical value, when available.
    pub equilibrium: Option<Equilibrium>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoHopfReason {
    NoSignChange,
    NoComplexPair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum HopfOutcome {
    Found(HopfPoint),
    NoHopf { reason: NoHopfReason },
}

impl HopfOutcome {
    pub fn point(&self) -> Option<&HopfPoint> {
        match self {
            HopfOutcome::Found(h) => Some(h),
            HopfOutcome::NoHopf { .. } => None,
        }
    }
}

/// The conjugate pair of a real 3x3 spectrum, upper member first.
fn complex_pair(eigs: &[Complex64; 3]) -> Option<Complex64> {
    eigs.iter().copied().find(|z| z.im > 0.0)
}

struct HopfProbe {
    coords: [f64; 3],
    pair: Option<Complex64>,
}

/// Bisection on the real part of the complex pair of `jac_at(p).1`, where
/// `jac_at` returns the equilibrium and its Jacobian at parameter `p`.
pub fn find_hopf_with<G>(mut jac_at: G, bracket: (f64, f64), tol: f64) -> Result<HopfOutcome>
where
    G: FnMut(f64) -> Result<([f64; 3], Matrix3<f64>)>,
{
    let mut probe = |p: f64| -> Result<HopfProbe> {
        let (coords, jac) = jac_at(p)?;
        Ok(HopfProbe {
            coords,
            pair: complex_pair(&eigenvalues_3x3(&jac)),
        })
    };
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && tol > 0.0) || lo == hi {
        return Err(Error::InvalidParameter(
            "Hopf bracket must be finite with positive tolerance".into(),
        ));
    }
    let pl = probe(lo)?;
    let ph = probe(hi)?;
    let (zl, zh) = match (pl.pair, ph.pair) {
        (None, None) => {
            return Ok(HopfOutcome::NoHopf {
                reason: NoHopfReason::NoComplexPair,
            })
        }
        (Some(zl), Some(zh)) => (zl, zh),
        (Some(_), None) | (None, Some(_)) => {
            // narrow down to where the pair collapses
            let has_lo = pl.pair.is_some();
            let (mut a, mut b) = (lo, hi);
            while (b - a).abs() > tol {
                let m = 0.5 * (a + b);
                if probe(m)?.pair.is_some() == has_lo {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Err(Error::PairLost {
                lo: a.min(b),
                hi: a.max(b),
            });
        }
    };
    if zl.re.signum() == zh.re.signum() && zl.re != 0.0 && zh.re != 0.0 {
        return Ok(HopfOutcome::NoHopf {
            reason: NoHopfReason::NoSignChange,
        });
    }
    let mut slo = zl.re;
    let mut best = if zl.re.abs() <= zh.re.abs() { (lo, pl) } else { (hi, ph) };
    let mut iterations = 0;
    while (hi - lo).abs() > tol && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let pm = probe(mid)?;
        let Some(zm) = pm.pair else {
            return Err(Error::PairLost {
                lo: lo.min(hi),
                hi: lo.max(hi),
            });
        };
        iterations += 1;
        let sm = zm.re;
        if sm == 0.0 {
            best = (mid, pm);
            lo = mid;
            hi = mid;
            break;
        }
        if sm.signum() == slo.signum() {
            lo = mid;
            slo = sm;
        } else {
            hi = mid;
        }
        best = (mid, pm);
    }
    let (value, pb) = best;
    let pair = pb.pair.expect("probe with a pair");
    Ok(HopfOutcome::Found(HopfPoint {
        value,
        coords: pb.coords,
        pair,
        omega: pair.im,
        bracket_width: (hi - lo).abs(),
        iterations,
        equilibrium: None,
    }))
}

/// Hopf point of the endemic equilibrium in `param` inside `bracket`.
pub fn find_hopf(params: &ModelParams, param: ParamName, bracket: (f64, f64), tol: f64) -> Result<HopfOutcome> {
    let e1_at = |v: f64| -> Result<Equilibrium> {
        let p = params.with(param, v);
        endemic_closed_form(&p)?
            .map(|s| s.equilibrium)
            .ok_or_else(|| Error::Domain(format!("no endemic equilibrium at {param} = {v}")))
    };
    let mut out = find_hopf_with(
        |v| {
            let e = e1_at(v)?;
            let jac = jacobian_analytic(&e.coords, &params.with(param, v))?;
            Ok((e.coords.to_array(), jac))
        },
        bracket,
        tol,
    )?;
    if let HopfOutcome::Found(h) = &mut out {
        h.equilibrium = Some(e1_at(h.value)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TbtDiagnostics {
    pub unfolding: UnfoldingParams,
    /// Max-norm of the vector field at E0.
    pub residual: f64,
    #[serde(with = "crate::serde_complex")]
    pub eigenvalues: [Complex64; 3],
    pub stability: Stability,
    pub eigenvalue_error: f64,
    pub chains: JordanChains,
    /// ||A q0||
    pub kernel_residual: f64,
    /// ||A^2 q1||, the nilpotency of the block on the generalized kernel.
    pub nilpotency_residual: f64,
    /// ||A q1||, nonzero for a genuine Jordan block.
    pub block_coupling: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TbtPoint {
    pub params: ModelParams,
    pub e0: CoreState,
    pub jacobian: [[f64; 3]; 3],
    pub diagnostics: TbtDiagnostics,
}

/// Impose gamma = mu = 0 (so b = b_hat = 0) and beta = tau, keeping a1, a2,
/// eta, tau and T, and check the double-zero structure at E0.
pub fn locate_tbt_point(params: &ModelParams) -> Result<TbtPoint> {
    if params.tau == 0.0 {
        return Err(Error::Degenerate(
            "tau = 0: the double zero eigenvalue is semisimple".into(),
        ));
    }
    let mut p = *params;
    p.gamma = 0.0;
    p.mu = 0.0;
    p.b = 0.0;
    p.b_hat = 0.0;
    p.beta = p.tau;
    let warnings = p.validate()?;

    let e0 = disease_free_equilibrium(&p).coords;
    let f = rhs_reduced(&e0, &p)?;
    let residual = f.s.abs().max(f.i.abs()).max(f.u.abs());
    let a = jacobian_analytic(&e0, &p)?;
    let eigenvalues = eigenvalues_3x3(&a);
    let expected = [0.0, 0.0, -1.0];
    let eigenvalue_error = eigenvalues
        .iter()
        .zip(expected)
        .map(|(z, e)| (z - Complex64::new(e, 0.0)).norm())
        .fold(0.0, f64::max);
    let chains = jordan_chains(&a, -1.0)?;
    let q0 = nalgebra::Vector3::from(chains.q0);
    let q1 = nalgebra::Vector3::from(chains.q1);
    let diagnostics = TbtDiagnostics {
        unfolding: unfolding(&p)?,
        residual,
        eigenvalues,
        stability: classify(&eigenvalues),
        eigenvalue_error,
        kernel_residual: (a * q0).norm(),
        nilpotency_residual: (a * a * q1).norm(),
        block_coupling: (a * q1).norm(),
        chains,
        warnings,
    };
    Ok(TbtPoint {
        params: p,
        e0,
        jacobian: [
            [a[(0, 0)], a[(0, 1)], a[(0, 2)]],
            [a[(1, 0)], a[(1, 1)], a[(1, 2)]],
            [a[(2, 0)], a[(2, 1)], a[(2, 2)]],
        ],
        diagnostics,
    })
}
