//! Periodic orbits through the Poincaré return map.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::Serialize;

use super::integrator::{integrate, IntegratorOptions};
use super::section::{section_crossings, SectionSpec};
use crate::equilibria::{disease_free_equilibrium, endemic_closed_form, r0};
use crate::error::{Error, Result};
use crate::model::{CoreState, ReducedSystem, VectorField};
use crate::params::{ModelParams, ParamName};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    /// Successive returns closer than this (max-norm) count as converged.
    pub tol: f64,
    pub max_returns: usize,
    /// Integration horizon allowed for a single return.
    pub return_time_max: f64,
    /// Population scale; radii and closure tolerances are relative to it.
    pub scale: f64,
    pub contraction_radius_rel: f64,
    pub contraction_returns: usize,
    pub closure_tol_rel: f64,
    /// States with a coordinate beyond `escape_rel * scale` count as escaped.
    pub escape_rel: f64,
    pub integrator: IntegratorOptions,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            tol: 1e-6,
            max_returns: 2000,
            return_time_max: 1000.0,
            scale: 1.0,
            contraction_radius_rel: 1e-3,
            contraction_returns: 5,
            closure_tol_rel: 1e-6,
            escape_rel: 1e3,
            integrator: IntegratorOptions::default(),
        }
    }
}

impl CycleOptions {
    pub fn for_model(params: &ModelParams, tol: f64) -> Self {
        CycleOptions {
            tol,
            scale: params.t_total,
            integrator: IntegratorOptions::for_model(params),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoCycleReason {
    ConvergesToEquilibrium,
    Escaped,
    /// The orbit stopped returning to the section.
    NoReturn,
    NoEndemicEquilibrium,
}

impl NoCycleReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoCycleReason::ConvergesToEquilibrium => "converges-to-equilibrium",
            NoCycleReason::Escaped => "escaped",
            NoCycleReason::NoReturn => "no-return",
            NoCycleReason::NoEndemicEquilibrium => "no-endemic-equilibrium",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleResult {
    /// Fixed point of the return map on the section.
    pub fixed_point: [f64; 3],
    pub period: f64,
    /// Max minus min of the second coordinate (I for the model) over a period.
    pub amplitude: f64,
    /// Smallest Euclidean distance to the reference point (E0 for the model).
    pub min_distance_to_reference: Option<f64>,
    /// Max-norm mismatch after re-integrating one period.
    pub closure_error: f64,
    /// Max-norm distance between successive return iterates.
    pub history: Vec<f64>,
    pub returns: usize,
    pub aitken_jumps: usize,
    pub refinement_iterations: usize,
    /// Eigenvalues of the return-map Jacobian on the section.
    #[serde(with = "crate::serde_complex::option")]
    pub multipliers: Option<[Complex64; 2]>,
}

impl CycleResult {
    pub fn fixed_state(&self) -> CoreState {
        CoreState::from_array(self.fixed_point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum CycleOutcome {
    Cycle(CycleResult),
    NoCycle {
        reason: NoCycleReason,
        detail: String,
        returns: usize,
    },
}

impl CycleOutcome {
    pub fn cycle(&self) -> Option<&CycleResult> {
        match self {
            CycleOutcome::Cycle(c) => Some(c),
            CycleOutcome::NoCycle { .. } => None,
        }
    }

    fn none(reason: NoCycleReason, detail: impl Into<String>, returns: usize) -> Self {
        CycleOutcome::NoCycle {
            reason,
            detail: detail.into(),
            returns,
        }
    }
}

fn max_diff(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

enum Return {
    Hit { t: f64, x: [f64; 3] },
    Stop(NoCycleReason, String),
}

struct ReturnMap<'a, F: ?Sized> {
    field: &'a F,
    section: &'a SectionSpec<3>,
    focus: Option<[f64; 3]>,
    opts: &'a CycleOptions,
}

impl<F: VectorField<3> + ?Sized> ReturnMap<'_, F> {
    fn apply(&self, x: &[f64; 3]) -> Result<Return> {
        // start exactly on the section so the departure is not counted as a return
        let r = section_crossings(
            self.field,
            self.section.project(x),
            self.section,
            self.opts.return_time_max,
            1,
            self.opts.integrator,
        );
        match r {
            Ok(c) => {
                let hit = c[0].state;
                if hit.iter().any(|v| v.abs() > self.opts.escape_rel * self.opts.scale) {
                    return Ok(Return::Stop(
                        NoCycleReason::Escaped,
                        "orbit left the bounded region".into(),
                    ));
                }
                Ok(Return::Hit { t: c[0].t, x: hit })
            }
            Err(Error::NoCrossing { t_max }) => {
                // an orbit that settles on the equilibrium stops crossing too
                if let Some(f) = self.focus {
                    let end = integrate(self.field, self.section.project(x), (0.0, t_max), self.opts.integrator)
                        .map(|tr| tr.last());
                    if let Ok(end) = end {
                        let d = dist(&end, &f);
                        if d <= self.opts.contraction_radius_rel * self.opts.scale {
                            return Ok(Return::Stop(
                                NoCycleReason::ConvergesToEquilibrium,
                                format!("no return within t = {t_max}; the orbit ends {d:.3e} from the equilibrium"),
                            ));
                        }
                    }
                }
                Ok(Return::Stop(
                    NoCycleReason::NoReturn,
                    format!("no return to the section within t = {t_max}"),
                ))
            }
            Err(Error::Domain(msg)) => Ok(Return::Stop(NoCycleReason::Escaped, msg)),
            Err(e) => Err(e),
        }
    }

    // Orthonormal basis of the section plane.
    fn basis(&self) -> [[f64; 3]; 2] {
        let n = self.section.normal();
        let mut out = Vec::with_capacity(2);
        for k in 0..3 {
            let mut v = [0.0; 3];
            v[k] = 1.0;
            let proj = |v: &mut [f64; 3], w: &[f64; 3]| {
                let d: f64 = (0..3).map(|i| v[i] * w[i]).sum();
                for i in 0..3 {
                    v[i] -= d * w[i];
                }
            };
            proj(&mut v, n);
            for w in out.iter() {
                proj(&mut v, w);
            }
            let norm = (v.iter().map(|a| a * a).sum::<f64>()).sqrt();
            if norm > 1e-3 {
                out.push(v.map(|a| a / norm));
            }
            if out.len() == 2 {
                break;
            }
        }
        [out[0], out[1]]
    }
}

/// Fixed point of the return map from `seed`: plain iteration with Aitken
/// extrapolation every third return, then a finite-difference secant solve
/// in section coordinates.
///
/// `focus` is the equilibrium the section surrounds; contraction onto it is
/// reported as [`NoCycleReason::ConvergesToEquilibrium`]. Distances to
/// `reference` are reported in the result.
pub fn find_cycle<F: VectorField<3> + ?Sized>(
    field: &F,
    section: &SectionSpec<3>,
    seed: [f64; 3],
    focus: Option<[f64; 3]>,
    reference: Option<[f64; 3]>,
    opts: &CycleOptions,
) -> Result<CycleOutcome> {
    let map = ReturnMap {
        field,
        section,
        focus,
        opts,
    };
    let radius = opts.contraction_radius_rel * opts.scale;

    let mut x = match map.apply(&seed)? {
        Return::Hit { x, .. } => x,
        Return::Stop(r, d) => return Ok(CycleOutcome::none(r, d, 0)),
    };
    let mut history = Vec::new();
    let mut focus_dist: Vec<f64> = Vec::new();
    let mut window: Vec<[f64; 3]> = vec![x];
    let mut aitken_jumps = 0;
    let mut returns = 1;
    let mut converged = false;

    while returns < opts.max_returns {
        let next = match map.apply(&x)? {
            Return::Hit { x, .. } => x,
            Return::Stop(r, d) => return Ok(CycleOutcome::none(r, d, returns)),
        };
        returns += 1;
        let step = max_diff(&next, &x);
        history.push(step);

        if let Some(f) = focus {
            focus_dist.push(dist(&next, &f));
            let k = opts.contraction_returns;
            if focus_dist.len() >= k {
                let tail = &focus_dist[focus_dist.len() - k..];
                if tail.iter().all(|&d| d < radius) && tail.windows(2).all(|w| w[1] < w[0]) {
                    return Ok(CycleOutcome::none(
                        NoCycleReason::ConvergesToEquilibrium,
                        format!("returns contracted to within {:.3e} of the equilibrium", tail[k - 1]),
                        returns,
                    ));
                }
            }
        }

        x = next;
        if step <= opts.tol {
            converged = true;
            break;
        }
        window.push(x);
        if window.len() == 3 {
            if let Some(cand) = aitken(&window, section) {
                let last_step = max_diff(&window[2], &window[1]);
                // on a diverging sequence Aitken points back at the repelling fixed point
                let contracting = last_step < max_diff(&window[1], &window[0]);
                let jump = max_diff(&cand, &window[2]);
                let bounded = cand.iter().all(|v| v.abs() <= opts.escape_rel * opts.scale);
                let admissible = !opts.integrator.nonnegative || cand.iter().all(|&v| v > 0.0);
                if contracting && jump <= 1e3 * last_step && bounded && admissible && field.eval(&cand).is_ok() {
                    x = cand;
                    aitken_jumps += 1;
                }
            }
            window.clear();
            window.push(x);
        }
    }
    if !converged {
        return Err(Error::MaxReturnsExceeded(opts.max_returns));
    }

    // secant refinement in section coordinates
    let basis = map.basis();
    let anchor = section.anchor;
    let to_coords = |p: &[f64; 3]| -> Vector2<f64> {
        let d: [f64; 3] = std::array::from_fn(|i| p[i] - anchor[i]);
        Vector2::new(
            (0..3).map(|i| d[i] * basis[0][i]).sum(),
            (0..3).map(|i| d[i] * basis[1][i]).sum(),
        )
    };
    let from_coords =
        |y: &Vector2<f64>| -> [f64; 3] { std::array::from_fn(|i| anchor[i] + y[0] * basis[0][i] + y[1] * basis[1][i]) };
    let residual = |y: &Vector2<f64>| -> Result<Option<(Vector2<f64>, f64)>> {
        match map.apply(&from_coords(y))? {
            Return::Hit { t, x } => Ok(Some((to_coords(&x) - y, t))),
            Return::Stop(..) => Ok(None),
        }
    };

    let mut y = to_coords(&x);
    let Some((mut g, _)) = residual(&y)? else {
        return Ok(CycleOutcome::none(
            NoCycleReason::NoReturn,
            "lost the orbit during refinement",
            returns,
        ));
    };
    let target = 1e-11 * opts.scale.max(1.0);
    let mut refinement_iterations = 0;
    let mut multipliers = None;
    for _ in 0..10 {
        let delta = 1e-6 * opts.scale.max(y.amax()).max(1e-3);
        let mut jac = Matrix2::zeros();
        let mut ok = true;
        for j in 0..2 {
            let mut yp = y;
            yp[j] += delta;
            match residual(&yp)? {
                Some((gp, _)) => jac.set_column(j, &((gp - g) / delta)),
                None => ok = false,
            }
        }
        if !ok {
            break;
        }
        let dr = jac + Matrix2::identity();
        multipliers = Some(eig2(&dr));
        if g.amax() <= target {
            break;
        }
        let Some(dy) = jac.lu().solve(&(-g)) else { break };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..6 {
            let yn = y + dy * lambda;
            if let Some((gn, _)) = residual(&yn)? {
                if gn.amax() < g.amax() {
                    y = yn;
                    g = gn;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        refinement_iterations += 1;
        if !improved {
            break;
        }
    }
    let fixed = from_coords(&y);

    if let Some(f) = focus {
        if dist(&fixed, &f) <= 1e-6 * opts.scale {
            return Ok(CycleOutcome::none(
                NoCycleReason::ConvergesToEquilibrium,
                "return map fixed point coincides with the equilibrium",
                returns,
            ));
        }
    }

    let period = match map.apply(&fixed)? {
        Return::Hit { t, .. } => t,
        Return::Stop(r, d) => return Ok(CycleOutcome::none(r, d, returns)),
    };
    let traj = integrate(field, fixed, (0.0, period), opts.integrator)?;
    let closure_error = max_diff(&traj.last(), &fixed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut dmin = f64::INFINITY;
    let mut visit = |p: &[f64; 3]| {
        lo = lo.min(p[1]);
        hi = hi.max(p[1]);
        if let Some(r) = reference {
            dmin = dmin.min(dist(p, &r));
        }
    };
    visit(&fixed);
    for seg in &traj.segments {
        for k in 1..=16 {
            visit(&seg.eval_unit(k as f64 / 16.0));
        }
    }

    Ok(CycleOutcome::Cycle(CycleResult {
        fixed_point: fixed,
        period,
        amplitude: hi - lo,
        min_distance_to_reference: reference.map(|_| dmin),
        closure_error,
        history,
        returns,
        aitken_jumps,
        refinement_iterations,
        multipliers,
    }))
}

/// Componentwise Aitken delta-squared, projected back onto the section.
fn aitken(w: &[[f64; 3]], section: &SectionSpec<3>) -> Option<[f64; 3]> {
    let mut out = w[2];
    for i in 0..3 {
        let d1 = w[1][i] - w[0][i];
        let d2 = w[2][i] - w[1][i];
        let den = d2 - d1;
        if den.abs() <= 1e-14 * (w[2][i].abs() + 1.0) {
            continue;
        }
        out[i] = w[2][i] - d2 * d2 / den;
    }
    let p = section.project(&out);
    p.iter().all(|v| v.is_finite()).then_some(p)
}

fn eig2(m: &Matrix2<f64>) -> [Complex64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = Complex64::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let half = Complex64::new(tr / 2.0, 0.0);
    [half + disc, half - disc]
}

/// The plane I = I1 through the endemic equilibrium with a seed offset from
/// it along S, or `None` when there is no endemic equilibrium.
pub fn default_section(params: &ModelParams) -> Result<Option<(SectionSpec<3>, CoreState)>> {
    let Some(sol) = endemic_closed_form(params)? else {
        return Ok(None);
    };
    let e1 = sol.equilibrium.coords;
    let section = SectionSpec::through_endemic(&e1);
    let seed = CoreState::new(e1.s + 0.01 * params.t_total.min(e1.s.max(1e-3)), e1.i, e1.u);
    Ok(Some((section, seed)))
}

/// Limit cycle of the reduced model around its endemic equilibrium.
pub fn find_limit_cycle(
    params: &ModelParams,
    section: &SectionSpec<3>,
    seed: &CoreState,
    tol: f64,
) -> Result<CycleOutcome> {
    find_limit_cycle_with(params, section, seed, &CycleOptions::for_model(params, tol))
}

pub fn find_limit_cycle_with(
    params: &ModelParams,
    section: &SectionSpec<3>,
    seed: &CoreState,
    opts: &CycleOptions,
) -> Result<CycleOutcome> {
    params.validate()?;
    let Some(sol) = endemic_closed_form(params)? else {
        return Ok(CycleOutcome::none(
            NoCycleReason::NoEndemicEquilibrium,
            "R0 <= 1: no endemic equilibrium",
            0,
        ));
    };
    let e0 = disease_free_equilibrium(params).coords.to_array();
    let sys = ReducedSystem { params: *params };
    find_cycle(
        &sys,
        section,
        seed.to_array(),
        Some(sol.equilibrium.coords.to_array()),
        Some(e0),
        opts,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomoclinicRow {
    pub value: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub period: f64,
    pub amplitude: f64,
    pub min_distance_to_e0: f64,
    pub fixed_point: CoreState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RampTermination {
    pub value: f64,
    pub reason: NoCycleReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomoclinicTable {
    pub param: ParamName,
    pub rows: Vec<HomoclinicRow>,
    pub terminated: Option<RampTermination>,
    /// Places where the period failed to grow or the distance to E0 failed
    /// to shrink along the ramp.
    pub monotonicity_violations: Vec<String>,
}

/// Follow the cycle along a parameter ramp, seeding each value with the
/// previous fixed point.
pub fn homoclinic_proximity(
    params: &ModelParams,
    param: ParamName,
    values: &[f64],
    tol: f64,
) -> Result<HomoclinicTable> {
    let mut table = HomoclinicTable {
        param,
        rows: Vec::new(),
        terminated: None,
        monotonicity_violations: Vec::new(),
    };
    let mut warm: Option<CoreState> = None;
    for (k, &v) in values.iter().enumerate() {
        let p = params.with(param, v);
        let setup = default_section(&p);
        let (section, seed) = match setup {
            Ok(Some((sec, seed))) => (sec, warm.unwrap_or(seed)),
            Ok(None) => {
                table.terminated = Some(RampTermination {
                    value: v,
                    reason: NoCycleReason::NoEndemicEquilibrium,
                    detail: "R0 <= 1: no endemic equilibrium".into(),
                });
                break;
            }
            Err(e) if k > 0 => {
                return Err(Error::ContinuationBroken {
                    value: v,
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e),
        };
        let outcome = match find_limit_cycle(&p, &section, &seed, tol) {
            Ok(o) => o,
            Err(e) if k > 0 => {
                return Err(Error::ContinuationBroken {
                    value: v,
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e),
        };
        match outcome {
            CycleOutcome::Cycle(c) => {
                warm = Some(c.fixed_state());
                table.rows.push(HomoclinicRow {
                    value: v,
                    r0: r0(&p)?,
                    period: c.period,
                    amplitude: c.amplitude,
                    min_distance_to_e0: c.min_distance_to_reference.unwrap_or(f64::NAN),
                    fixed_point: c.fixed_state(),
                });
            }
            CycleOutcome::NoCycle { reason, detail, .. } => {
                table.terminated = Some(RampTermination {
                    value: v,
                    reason,
                    detail,
                });
                break;
            }
        }
    }
    for w in table.rows.windows(2) {
        if w[1].period <= w[0].period {
            table.monotonicity_violations.push(format!(
                "period decreased from {} to {} between {} = {} and {}",
                w[0].period, w[1].period, param, w[0].value, w[1].value
            ));
        }
        if w[1].min_distance_to_e0 >= w[0].min_distance_to_e0 {
            table.monotonicity_violations.push(format!(
                "distance to E0 grew from {} to {} between {} = {} and {}",
                w[0].min_distance_to_e0, w[1].min_distance_to_e0, param, w[0].value, w[1].value
            ));
        }
    }
    Ok(table)
}
