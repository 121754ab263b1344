//! Poincaré sections and crossing detection on the dense output.

use serde::{Deserialize, Serialize};

use super::integrator::{DenseSegment, IntegratorOptions, Stepper};
use crate::error::{Error, Result};
use crate::model::{CoreState, VectorField};

/// |flow · normal| below this at a crossing raises the tangency flag.
pub const TANGENCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// normal · (x - anchor) goes from negative to nonnegative
    Positive,
    Negative,
    Both,
}

/// Plane `normal · (x - anchor) = 0` with a crossing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionSpec<const D: usize = 3> {
    normal: [f64; D],
    pub anchor: [f64; D],
    pub direction: Direction,
}

impl<const D: usize> SectionSpec<D> {
    /// The normal is rescaled to unit length.
    pub fn new(normal: [f64; D], anchor: [f64; D], direction: Direction) -> Result<Self> {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) || anchor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "section normal must be finite and nonzero".into(),
            ));
        }
        Ok(SectionSpec {
            normal: normal.map(|v| v / norm),
            anchor,
            direction,
        })
    }

    pub fn normal(&self) -> &[f64; D] {
        &self.normal
    }

    /// Signed distance from the plane.
    pub fn eval(&self, x: &[f64; D]) -> f64 {
        (0..D).map(|i| self.normal[i] * (x[i] - self.anchor[i])).sum()
    }

    /// Orthogonal projection onto the plane.
    pub fn project(&self, x: &[f64; D]) -> [f64; D] {
        let g = self.eval(x);
        std::array::from_fn(|i| x[i] - g * self.normal[i])
    }

    fn matches(&self, g_prev: f64, g_new: f64) -> bool {
        let up = g_prev < 0.0 && g_new >= 0.0;
        let down = g_prev > 0.0 && g_new <= 0.0;
        match self.direction {
            Direction::Positive => up,
            Direction::Negative => down,
            Direction::Both => up || down,
        }
    }
}

impl SectionSpec<3> {
    /// The plane I = I1 through an endemic state, crossed with I increasing.
    pub fn through_endemic(e1: &CoreState) -> Self {
        SectionSpec::new([0.0, 1.0, 0.0], e1.to_array(), Direction::Positive).expect("constant normal")
    }

    pub fn anchor_state(&self) -> CoreState {
        CoreState::from_array(self.anchor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<const D: usize = 3> {
    pub t: f64,
    pub state: [f64; D],
    /// flow · normal at the crossing
    pub transversality: f64,
    pub tangency_warning: bool,
}

/// Root of `g` along one dense segment, known to change sign over it.
/// Illinois-modified regula falsi in the unit step coordinate.
fn locate<const D: usize>(
    seg: &DenseSegment<D>,
    section: &SectionSpec<D>,
    g0: f64,
    g1: f64,
    t_tol: f64,
) -> (f64, [f64; D]) {
    if g1 == 0.0 {
        return (seg.t1(), seg.end());
    }
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let (mut ga, mut gb) = (g0, g1);
    let s_tol = t_tol / seg.h.abs();
    let mut side = 0i8;
    let mut s = 0.5;
    for _ in 0..200 {
        s = (a * gb - b * ga) / (gb - ga);
        if !(s > a && s < b) {
            s = 0.5 * (a + b);
        }
        let gs = section.eval(&seg.eval_unit(s));
        if gs == 0.0 {
            break;
        }
        if (gs > 0.0) == (ga > 0.0) {
            a = s;
            ga = gs;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = s;
            gb = gs;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if b - a <= s_tol {
            // the endpoint with the smaller residual
            let ya = section.eval(&seg.eval_unit(a)).abs();
            let yb = section.eval(&seg.eval_unit(b)).abs();
            s = if ya <= yb { a } else { b };
            break;
        }
    }
    (seg.t0 + s * seg.h, seg.eval_unit(s))
}

/// Crossings of `section` along the trajectory from `x0`, in time order, up
/// to `max_crossings` of them or until `t_max`. A start point lying on the
/// section is not reported.
pub fn section_crossings<const D: usize, F: VectorField<D> + ?Sized>(
    field: &F,
    x0: [f64; D],
    section: &SectionSpec<D>,
    t_max: f64,
    max_crossings: usize,
    opts: IntegratorOptions,
) -> Result<Vec<Crossing<D>>> {
    let mut stepper = Stepper::new(field, x0, 0.0, t_max, opts)?;
    let t_tol = 1e-10 * t_max.abs().max(f64::MIN_POSITIVE);
    let scale = x0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut g_prev = section.eval(&x0);
    let mut skip_first = g_prev.abs() <= 1e-12 * scale;
    let mut out = Vec::new();

    while out.len() < max_crossings {
        let Some(seg) = stepper.step()? else { break };
        let g_new = section.eval(&stepper.y());
        if skip_first {
            skip_first = false;
            g_prev = g_new;
            continue;
        }
        if section.matches(g_prev, g_new) {
            let (t, state) = locate(&seg, section, g_prev, g_new, t_tol);
            let flow = field.eval(&state)?;
            let transversality: f64 = (0..D).map(|i| flow[i] * section.normal[i]).sum();
            out.push(Crossing {
                t,
                state,
                transversality,
                tangency_warning: transversality.abs() < TANGENCY_TOL,
            });
        }
        g_prev = g_new;
    }
    if out.is_empty() {
        return Err(Error::NoCrossing { t_max });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation(x: &[f64; 3]) -> Result<[f64; 3]> {
        Ok([-x[1], x[0], -x[2]])
    }

    #[test]
    fn rotation_crossings_every_two_pi() {
        let sec = SectionSpec::new([0.0, 2.0, 0.0], [0.0; 3], Direction::Positive).unwrap();
        assert_eq!(sec.normal(), &[0.0, 1.0, 0.0]);
        let cr = section_crossings(
            &rotation,
            [1.0, -0.1, 0.5],
            &sec,
            40.0,
            100,
            IntegratorOptions::default(),
        )
        .unwrap();
        // upward crossings where the polar angle is a multiple of 2 pi
        let phase0 = (-0.1f64).atan2(1.0);
        assert_eq!(cr.len(), 7);
        for (k, c) in cr.iter().enumerate() {
            let want = -phase0 + 2.0 * PI * k as f64;
            assert!((c.t - want).abs() < 1e-8, "k {k}: {} vs {want}", c.t);
            assert!(sec.eval(&c.state).abs() < 1e-9);
            assert!(c.transversality > 0.0 && !c.tangency_warning);
        }
        for w in cr.windows(2) {
            assert!((w[1].t - w[0].t - 2.0 * PI).abs() < 1e-8);
        }
    }

    #[test]
    fn both_directions_and_start_on_section() {
        let sec = SectionSpec::new([0.0, 1.0, 0.0], [0.0; 3], Direction::Both).unwrap();
        let cr = section_crossings(&rotation, [1.0, 0.0, 0.0], &sec, 10.0, 10, IntegratorOptions::default()).unwrap();
        assert_eq!(cr.len(), 3);
        assert!((cr[0].t - PI).abs() < 1e-8);
        assert!(cr[0].transversality < 0.0);
    }

    #[test]
    fn stable_node_runs_out_of_crossings() {
        let node = |x: &[f64; 3]| -> Result<[f64; 3]> { Ok([-x[0], -2.0 * x[1], -x[2]]) };
        let sec = SectionSpec::new([1.0, 0.0, 0.0], [0.5, 0.0, 0.0], Direction::Both).unwrap();
        let cr = section_crossings(&node, [1.0, 1.0, 1.0], &sec, 50.0, 10, IntegratorOptions::default()).unwrap();
        assert_eq!(cr.len(), 1);
        assert!((cr[0].t - 2f64.ln()).abs() < 1e-8);
        let sec2 = SectionSpec::new([1.0, 0.0, 0.0], [2.0, 0.0, 0.0], Direction::Both).unwrap();
        assert!(matches!(
            section_crossings(&node, [1.0, 1.0, 1.0], &sec2, 50.0, 10, IntegratorOptions::default()),
            Err(Error::NoCrossing { .. })
        ));
    }

    #[test]
    fn zero_normal_rejected() {
        assert!(SectionSpec::new([0.0; 3], [0.0; 3], Direction::Both).is_err());
    }
}
