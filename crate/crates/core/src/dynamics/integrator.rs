//! Dormand–Prince 5(4) with the free 4th-order continuous extension.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::VectorField;
use crate::params::ModelParams;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Reject steps that push any coordinate below -100 * abs_tol.
    pub nonnegative: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_init: None,
            h_max: None,
            max_steps: 5_000_000,
            nonnegative: false,
        }
    }
}

impl IntegratorOptions {
    /// Tolerances used for the epidemic model: rel 1e-10, abs 1e-12 * T,
    /// with the nonnegativity guard on.
    pub fn for_model(params: &ModelParams) -> Self {
        IntegratorOptions {
            abs_tol: 1e-12 * params.t_total,
            nonnegative: true,
            ..Default::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Continuous extension over one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct DenseSegment<const D: usize> {
    pub t0: f64,
    pub h: f64,
    coeffs: [[f64; D]; 5],
}

impl<const D: usize> DenseSegment<D> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; D] {
        self.coeffs[0]
    }

    pub fn end(&self) -> [f64; D] {
        let mut y = self.coeffs[0];
        for (yi, di) in y.iter_mut().zip(self.coeffs[1].iter()) {
            *yi += di;
        }
        y
    }

    /// State at fractional position `s` in [0, 1] of the step.
    pub fn eval_unit(&self, s: f64) -> [f64; D] {
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        std::array::from_fn(|i| r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i]))))
    }

    pub fn eval(&self, t: f64) -> [f64; D] {
        self.eval_unit((t - self.t0) / self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "kebab-case")]
pub enum SolverStatus {
    Success,
    Failed(String),
}

/// Accepted steps of an integration, with the dense output kept for
/// interpolation.
#[derive(Debug, Clone)]
pub struct Trajectory<const D: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; D]>,
    pub accepted: usize,
    pub rejected: usize,
    pub status: SolverStatus,
    pub error: Option<Error>,
    pub segments: Vec<DenseSegment<D>>,
}

impl<const D: usize> Trajectory<D> {
    pub fn last(&self) -> [f64; D] {
        *self.states.last().expect("trajectory has at least one state")
    }

    pub fn is_success(&self) -> bool {
        self.status == SolverStatus::Success
    }

    /// Interpolated state at `t` inside the integrated span.
    pub fn interpolate(&self, t: f64) -> Option<[f64; D]> {
        if self.segments.is_empty() {
            return (t == self.times[0]).then(|| self.states[0]);
        }
        let idx = self.segments.partition_point(|seg| seg.t1() < t);
        let seg = self.segments.get(idx)?;
        (t >= seg.t0).then(|| seg.eval(t))
    }
}

/// One-step driver shared by [`integrate`] and the event locator.
pub struct Stepper<'a, const D: usize, F: ?Sized> {
    field: &'a F,
    opts: IntegratorOptions,
    t: f64,
    y: [f64; D],
    k1: [f64; D],
    h: f64,
    t_end: f64,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

impl<'a, const D: usize, F: VectorField<D> + ?Sized> Stepper<'a, D, F> {
    pub fn new(field: &'a F, x0: [f64; D], t0: f64, t_end: f64, opts: IntegratorOptions) -> Result<Self> {
        opts.check()?;
        if !(t0.is_finite() && t_end.is_finite() && t_end >= t0) {
            return Err(Error::InvalidParameter(format!("invalid time span [{t0}, {t_end}]")));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial state is not finite".into()));
        }
        let k1 = field.eval(&x0)?;
        let mut st = Stepper {
            field,
            opts,
            t: t0,
            y: x0,
            k1,
            h: 0.0,
            t_end,
            accepted: 0,
            rejected: 0,
        };
        st.h = match opts.h_init {
            Some(h) => h,
            None => st.initial_step()?,
        };
        if let Some(hm) = opts.h_max {
            st.h = st.h.min(hm);
        }
        Ok(st)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> [f64; D] {
        self.y
    }

    pub fn done(&self) -> bool {
        self.t >= self.t_end
    }

    fn scale(&self, a: &[f64; D], b: &[f64; D], i: usize) -> f64 {
        self.opts.abs_tol + self.opts.rel_tol * a[i].abs().max(b[i].abs())
    }

    fn rms(&self, v: &[f64; D], reference: &[f64; D]) -> f64 {
        let s: f64 = (0..D)
            .map(|i| {
                let r = v[i] / self.scale(reference, reference, i);
                r * r
            })
            .sum();
        (s / D as f64).sqrt()
    }

    // Hairer & Wanner's starting step heuristic.
    fn initial_step(&self) -> Result<f64> {
        let span = self.t_end - self.t;
        if span == 0.0 {
            return Ok(0.0);
        }
        let d0 = self.rms(&self.y, &self.y);
        let d1 = self.rms(&self.k1, &self.y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1 = axpy(&self.y, h0, &[(1.0, &self.k1)]);
        let h1 = match self.field.eval(&y1) {
            Ok(f1) => {
                let diff: [f64; D] = std::array::from_fn(|i| f1[i] - self.k1[i]);
                let d2 = self.rms(&diff, &self.y) / h0;
                let m = d1.max(d2);
                if m <= 1e-15 {
                    (h0 * 1e-3).max(1e-6)
                } else {
                    (0.01 / m).powf(0.2)
                }
            }
            Err(_) => h0 * 1e-3,
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    /// Advance by one accepted step; `Ok(None)` once `t_end` is reached.
    pub fn step(&mut self) -> Result<Option<DenseSegment<D>>> {
        if self.done() {
            return Ok(None);
        }
        let mut h = self.h.min(self.t_end - self.t);
        loop {
            if self.accepted + self.rejected >= self.opts.max_steps {
                return Err(Error::MaxStepsExceeded(self.opts.max_steps));
            }
            if h <= 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }
            match self.try_step(h) {
                Ok(Some((seg, y_new, k7, err))) => {
                    let fac = if err == 0.0 {
                        FAC_MAX
                    } else {
                        (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
                    };
                    if err <= 1.0 {
                        self.t = if self.t_end - (self.t + h) <= 1e-14 * self.t_end.abs().max(1.0) {
                            self.t_end
                        } else {
                            self.t + h
                        };
                        self.y = y_new;
                        self.k1 = k7;
                        self.accepted += 1;
                        self.h = h * fac;
                        if let Some(hm) = self.opts.h_max {
                            self.h = self.h.min(hm);
                        }
                        return Ok(Some(seg));
                    }
                    self.rejected += 1;
                    h *= fac.min(1.0);
                }
                Ok(None) => {
                    self.rejected += 1;
                    h *= 0.5;
                }
                Err(Error::Domain(msg)) => {
                    self.rejected += 1;
                    h *= 0.5;
                    if h <= 1e-14 * self.t.abs().max(1.0) {
                        return Err(Error::Domain(msg));
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// One trial step. `Ok(None)` signals a guard rejection.
    #[allow(clippy::type_complexity)]
    fn try_step(&self, h: f64) -> Result<Option<(DenseSegment<D>, [f64; D], [f64; D], f64)>> {
        let f = self.field;
        let y = &self.y;
        let k1 = &self.k1;
        let k2 = f.eval(&axpy(y, h, &[(A21, k1)]))?;
        let k3 = f.eval(&axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
        let k4 = f.eval(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f.eval(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f.eval(&axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ))?;
        let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        if y_new.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        if self.opts.nonnegative && y_new.iter().any(|&v| v < -100.0 * self.opts.abs_tol) {
            return Ok(None);
        }
        let k7 = f.eval(&y_new)?;

        let mut sum = 0.0;
        for i in 0..D {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let r = e / self.scale(y, &y_new, i);
            sum += r * r;
        }
        let err = (sum / D as f64).sqrt();
        if err > 1.0 {
            let seg = DenseSegment {
                t0: self.t,
                h,
                coeffs: [[0.0; D]; 5],
            };
            return Ok(Some((seg, y_new, k7, err)));
        }

        let mut coeffs = [[0.0; D]; 5];
        for i in 0..D {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            coeffs[0][i] = y[i];
            coeffs[1][i] = ydiff;
            coeffs[2][i] = bspl;
            coeffs[3][i] = ydiff - h * k7[i] - bspl;
            coeffs[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Ok(Some((DenseSegment { t0: self.t, h, coeffs }, y_new, k7, err)))
    }
}

/// Integrate from `t_span.0` to `t_span.1`, keeping going as far as possible
/// on failure. The returned trajectory records the failure in `status`.
pub fn integrate_partial<const D: usize, F: VectorField<D> + ?Sized>(
    field: &F,
    x0: [f64; D],
    t_span: (f64, f64),
    opts: IntegratorOptions,
) -> Result<Trajectory<D>> {
    let mut stepper = Stepper::new(field, x0, t_span.0, t_span.1, opts)?;
    let mut traj = Trajectory {
        times: vec![t_span.0],
        states: vec![x0],
        accepted: 0,
        rejected: 0,
        status: SolverStatus::Success,
        error: None,
        segments: Vec::new(),
    };
    loop {
        match stepper.step() {
            Ok(Some(seg)) => {
                traj.times.push(stepper.t());
                traj.states.push(stepper.y());
                traj.segments.push(seg);
            }
            Ok(None) => break,
            Err(e) => {
                traj.status = SolverStatus::Failed(e.to_string());
                traj.error = Some(e);
                break;
            }
        }
    }
    traj.accepted = stepper.accepted;
    traj.rejected = stepper.rejected;
    Ok(traj)
}

/// Adaptive integration over `t_span`; solver failures are returned as errors.
pub fn integrate<const D: usize, F: VectorField<D> + ?Sized>(
    field: &F,
    x0: [f64; D],
    t_span: (f64, f64),
    opts: IntegratorOptions,
) -> Result<Trajectory<D>> {
    let traj = integrate_partial(field, x0, t_span, opts)?;
    match traj.error.clone() {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}
