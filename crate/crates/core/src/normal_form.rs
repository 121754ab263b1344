//! Quadratic normal form at the double-zero point of the disease-free
//! equilibrium.
//!
//! With the generalized kernel spanned by q0, q1 (A q0 = 0, A q1 = q0) and
//! the adjoint chain p1, p0 (Aᵀ p1 = 0, Aᵀ p0 = p1), the flow on the center
//! manifold reads, to second order,
//!
//! ```text
//! w1' = w2
//! w2' = a2 w1^2 + b2 w1 w2
//! ```
//!
//! with a2 = ½⟨p1, B(q0,q0)⟩ and b2 = ⟨p0, B(q0,q0)⟩ + ⟨p1, B(q0,q1)⟩, where
//! B is the second derivative of the vector field as a bilinear map.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};
use serde::Serialize;

use crate::equilibria::disease_free_equilibrium;
use crate::error::{Error, Result};
use crate::exec::{map_ordered, Execution};
use crate::linalg::{char_poly, condition_number};
use crate::model::{jacobian_analytic, CoreState, ReducedSystem, VectorField};
use crate::params::ModelParams;

/// Default relative step of the second-derivative stencil.
pub const DEFAULT_B_STEP: f64 = 1e-4;
/// Tolerance on the characteristic polynomial for the {0, 0, λ0} pattern.
pub const EIGEN_PATTERN_TOL: f64 = 1e-8;
const HOMOLOGICAL_COND_MAX: f64 = 1e12;
const FIT_COND_MAX: f64 = 1e10;

type V3 = [f64; 3];

fn dot(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &V3) -> f64 {
    dot(a, a).sqrt()
}

fn comb(x: &V3, h: f64, d: &V3) -> V3 {
    [x[0] + h * d[0], x[1] + h * d[1], x[2] + h * d[2]]
}

/// D²f(x0)(u, v) by second differences along unit directions, with
/// h = step * (1 + ||x0||_inf):
///
/// [f(x+hs) + f(x-hs) - (f(x+hu) + f(x-hu)) - (f(x+hv) + f(x-hv)) + 2f(x)] / (2h²)
///
/// for s = u + v. The grouping makes the result exactly symmetric in u, v.
pub fn bilinear_form<F: VectorField<3> + ?Sized>(field: &F, x0: &V3, u: &V3, v: &V3, step: f64) -> Result<V3> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Ok([0.0; 3]);
    }
    let uh = u.map(|c| c / nu);
    let vh = v.map(|c| c / nv);
    let s = [uh[0] + vh[0], uh[1] + vh[1], uh[2] + vh[2]];
    let h = step * (1.0 + x0.iter().fold(0.0_f64, |m, c| m.max(c.abs())));

    let f0 = field.eval(x0)?;
    let fs = pair_sum(field, x0, h, &s)?;
    let fu = pair_sum(field, x0, h, &uh)?;
    let fv = pair_sum(field, x0, h, &vh)?;
    let scale = nu * nv / (2.0 * h * h);
    Ok(std::array::from_fn(|i| (fs[i] - (fu[i] + fv[i]) + 2.0 * f0[i]) * scale))
}

fn pair_sum<F: VectorField<3> + ?Sized>(field: &F, x: &V3, h: f64, d: &V3) -> Result<V3> {
    let p = field.eval(&comb(x, h, d))?;
    let m = field.eval(&comb(x, -h, d))?;
    Ok([p[0] + m[0], p[1] + m[1], p[2] + m[2]])
}

/// [`bilinear_form`] of the reduced model.
pub fn bilinear_form_b(x0: &CoreState, params: &ModelParams, u: &V3, v: &V3, step: f64) -> Result<V3> {
    bilinear_form(&ReducedSystem { params: *params }, &x0.to_array(), u, v, step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainResiduals {
    /// ||A q0||
    pub a_q0: f64,
    /// ||A q1 - q0||
    pub a_q1: f64,
    /// ||Aᵀ p1||
    pub at_p1: f64,
    /// ||Aᵀ p0 - p1||
    pub at_p0: f64,
}

impl ChainResiduals {
    pub fn max(&self) -> f64 {
        self.a_q0.max(self.a_q1).max(self.at_p1).max(self.at_p0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JordanChains {
    pub q0: V3,
    pub q1: V3,
    pub p0: V3,
    pub p1: V3,
    pub residuals: ChainResiduals,
    /// Deviations of ⟨p0,q0⟩, ⟨p1,q1⟩ from 1 and of ⟨p0,q1⟩, ⟨p1,q0⟩ from 0.
    pub biorthogonality: [f64; 4],
    /// Frobenius norm of A, the scale of the residual checks.
    pub a_norm: f64,
}

impl JordanChains {
    pub fn max_biorthogonality_error(&self) -> f64 {
        self.biorthogonality.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Chains for (c q0, c q1) with the compensating adjoint scaling.
    pub fn rescaled(&self, c: f64) -> JordanChains {
        JordanChains {
            q0: self.q0.map(|v| v * c),
            q1: self.q1.map(|v| v * c),
            p0: self.p0.map(|v| v / c),
            p1: self.p1.map(|v| v / c),
            ..*self
        }
    }
}

fn first_nonzero_positive(v: &mut V3) {
    let scale = norm(v);
    if let Some(c) = v.iter().find(|c| c.abs() > 1e-12 * scale) {
        if *c < 0.0 {
            *v = v.map(|x| -x);
        }
    }
}

fn bordered_solve(m: &Matrix3<f64>, col: &V3, row: &V3, rhs: &V3, last: f64) -> Result<V3> {
    let mut b = Matrix4::zeros();
    b.fixed_view_mut::<3, 3>(0, 0).copy_from(m);
    for i in 0..3 {
        b[(i, 3)] = col[i];
        b[(3, i)] = row[i];
    }
    let cond = condition_number(&DMatrix::from_column_slice(4, 4, b.as_slice()));
    if !(cond < HOMOLOGICAL_COND_MAX) {
        return Err(Error::Structure(format!(
            "bordered system is singular (condition number {cond:e})"
        )));
    }
    let sol = b
        .lu()
        .solve(&Vector4::new(rhs[0], rhs[1], rhs[2], last))
        .ok_or_else(|| Error::Structure("bordered system is singular".into()))?;
    Ok([sol[0], sol[1], sol[2]])
}

/// Right and left Jordan chains of a 3x3 matrix with spectrum {0, 0, λ0}
/// and a single 2x2 nilpotent block.
///
/// Normalization: ||q0|| = 1 with its first nonzero component positive,
/// ⟨q0, q1⟩ = 0, and the four biorthogonality conditions.
pub fn jordan_chains(a: &Matrix3<f64>, lambda0: f64) -> Result<JordanChains> {
    let a_norm = a.norm();
    let tol = EIGEN_PATTERN_TOL * a_norm.max(1.0);
    let [c2, c1, c0] = char_poly(a);
    // λ²(λ - λ0) = λ³ - λ0 λ²
    if (c2 + lambda0).abs() > tol || c1.abs() > tol || c0.abs() > tol {
        return Err(Error::Structure(format!(
            "spectrum is not {{0, 0, {lambda0}}} (characteristic polynomial λ³ + {c2:e} λ² + {c1:e} λ + {c0:e})"
        )));
    }
    if lambda0.abs() <= tol {
        return Err(Error::Structure("λ0 must be nonzero".into()));
    }
    let svd = a.svd(true, true);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv_mid = svd.singular_values[idx[1]];
    if sv_mid <= tol {
        return Err(Error::Structure(
            "zero eigenvalue is semisimple (kernel of dimension 2)".into(),
        ));
    }
    let v_t = svd.v_t.expect("requested");
    let u = svd.u.expect("requested");
    let k = idx[2];
    let mut q0 = [v_t[(k, 0)], v_t[(k, 1)], v_t[(k, 2)]];
    let mut p1_raw = [u[(0, k)], u[(1, k)], u[(2, k)]];
    let at = a.transpose();
    // polish both null vectors; the SVD ones carry errors of order eps / sv_mid
    for _ in 0..2 {
        let q = bordered_solve(a, &p1_raw, &q0, &[0.0; 3], 1.0)?;
        let p = bordered_solve(&at, &q0, &p1_raw, &[0.0; 3], 1.0)?;
        let (nq, np) = (norm(&q), norm(&p));
        q0 = q.map(|x| x / nq);
        p1_raw = p.map(|x| x / np);
    }
    first_nonzero_positive(&mut q0);

    let q1 = bordered_solve(a, &p1_raw, &q0, &q0, 0.0)?;
    let s = dot(&p1_raw, &q1);
    if s.abs() <= 1e-14 {
        return Err(Error::Structure("⟨p1, q1⟩ vanishes".into()));
    }
    let p1 = p1_raw.map(|x| x / s);
    let mut p0 = bordered_solve(&at, &q0, &p1, &p1, 0.0)?;
    let c = dot(&p0, &q1);
    p0 = [p0[0] - c * p1[0], p0[1] - c * p1[1], p0[2] - c * p1[2]];

    let (q0v, q1v, p0v, p1v) = (
        Vector3::from(q0),
        Vector3::from(q1),
        Vector3::from(p0),
        Vector3::from(p1),
    );
    let residuals = ChainResiduals {
        a_q0: (a * q0v).norm(),
        a_q1: (a * q1v - q0v).norm(),
        at_p1: (at * p1v).norm(),
        at_p0: (at * p0v - p1v).norm(),
    };
    Ok(JordanChains {
        q0,
        q1,
        p0,
        p1,
        residuals,
        biorthogonality: [dot(&p0, &q0) - 1.0, dot(&p1, &q1) - 1.0, dot(&p0, &q1), dot(&p1, &q0)],
        a_norm,
    })
}

/// Right eigenvector of λ0 (unit norm) and the matching left eigenvector
/// scaled so that ⟨s, q⟩ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableDirection {
    pub lambda0: f64,
    pub q: V3,
    pub s: V3,
}

pub fn stable_direction(a: &Matrix3<f64>, lambda0: f64) -> Result<StableDirection> {
    let m = a - Matrix3::identity() * lambda0;
    let svd = m.svd(true, true);
    let k = svd.singular_values.imin();
    let v_t = svd.v_t.expect("requested");
    let u = svd.u.expect("requested");
    let mut q = [v_t[(k, 0)], v_t[(k, 1)], v_t[(k, 2)]];
    first_nonzero_positive(&mut q);
    let s_raw = [u[(0, k)], u[(1, k)], u[(2, k)]];
    let d = dot(&s_raw, &q);
    if d.abs() <= 1e-12 {
        return Err(Error::Structure("λ0 eigenvalue is not simple".into()));
    }
    Ok(StableDirection {
        lambda0,
        q,
        s: s_raw.map(|x| x / d),
    })
}

/// (a2, b2) from the projection formulas.
pub fn quadratic_coeffs<F: VectorField<3> + ?Sized>(
    field: &F,
    x0: &V3,
    chains: &JordanChains,
    step: f64,
) -> Result<(f64, f64)> {
    let b00 = bilinear_form(field, x0, &chains.q0, &chains.q0, step)?;
    let b01 = bilinear_form(field, x0, &chains.q0, &chains.q1, step)?;
    Ok((
        0.5 * dot(&chains.p1, &b00),
        dot(&chains.p0, &b00) + dot(&chains.p1, &b01),
    ))
}

/// Quadratic center-manifold coefficients z = ½ (h11 w1² + 2 h12 w1 w2 + h22 w2²)
/// from the projected nonlinearity G = g11 w1² + 2 g12 w1 w2 + g22 w2² of the
/// stable coordinate, with w' = (w2, 0) at linear order.
fn solve_homological(lambda0: f64, g: [f64; 3]) -> Result<([[f64; 2]; 2], f64)> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.5 * lambda0, 0.0, 0.0,
        -1.0, lambda0, 0.0,
        0.0, -1.0, 0.5 * lambda0,
    );
    let cond = condition_number(&DMatrix::from_column_slice(3, 3, m.as_slice()));
    if !(cond <= HOMOLOGICAL_COND_MAX) {
        return Err(Error::IllConditioned { cond });
    }
    let rhs = Vector3::new(-0.5 * g[0], -g[1], -0.5 * g[2]);
    let h = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    let res = (m * h - rhs).amax();
    let scale = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let rel = if scale > 0.0 { res / scale } else { res };
    Ok(([[h[0], h[1]], [h[1], h[2]]], rel))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub a2: f64,
    pub b2: f64,
    pub radius: f64,
    pub grid_points: usize,
    /// Condition number of the scaled design matrix.
    pub condition: f64,
    /// Max-norm least-squares residual of the two projected equations.
    pub residual: f64,
    pub h1: [[f64; 2]; 2],
    pub h1_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub radius: f64,
    /// Grid points per axis (odd, so the grid is symmetric about zero).
    pub points: usize,
    pub exec: Execution,
}

/// Independent estimate of (a2, b2): sample the vector field on the
/// approximate center manifold over a grid of the given radius, project
/// onto p0, p1 and fit quadratic polynomials by least squares.
///
/// The center-manifold graph is built by fixed-point iteration: fit the
/// stable-coordinate nonlinearity from samples, solve the homological
/// equation, resample. B is not used.
pub fn reduced_fit_oracle<F: VectorField<3> + Sync + ?Sized>(
    field: &F,
    x0: &V3,
    chains: &JordanChains,
    stable: &StableDirection,
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = opts.points.max(3) | 1;
    let w1_max = opts.radius / norm(&chains.q0);
    let w2_max = opts.radius / norm(&chains.q1);
    let axis: Vec<f64> = (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect();
    let grid: Vec<(f64, f64)> = axis.iter().flat_map(|&a| axis.iter().map(move |&b| (a, b))).collect();

    // design in scaled variables: 1, x, y, x², xy, y²
    let mut design = DMatrix::zeros(grid.len(), 6);
    for (r, &(x, y)) in grid.iter().enumerate() {
        let row = [1.0, x, y, x * x, x * y, y * y];
        for (c, v) in row.iter().enumerate() {
            design[(r, c)] = *v;
        }
    }
    let condition = condition_number(&design);
    if !(condition <= FIT_COND_MAX) {
        return Err(Error::FitIllConditioned { cond: condition });
    }
    let svd = design.clone().svd(true, true);
    let fit = |values: &[f64]| -> Result<(DVector<f64>, f64)> {
        let b = DVector::from_column_slice(values);
        let coef = svd
            .solve(&b, 1e-14)
            .map_err(|_| Error::FitIllConditioned { cond: condition })?;
        let res = (&design * &coef - b).amax();
        Ok((coef, res))
    };
    // scaled quadratic coefficients back to w units
    let unscale = |c: &DVector<f64>| -> [f64; 3] {
        [
            c[3] / (w1_max * w1_max),
            c[4] / (w1_max * w2_max),
            c[5] / (w2_max * w2_max),
        ]
    };

    let point = |h: &[[f64; 2]; 2], x: f64, y: f64| -> V3 {
        let (w1, w2) = (x * w1_max, y * w2_max);
        let z = 0.5 * (h[0][0] * w1 * w1 + 2.0 * h[0][1] * w1 * w2 + h[1][1] * w2 * w2);
        std::array::from_fn(|i| x0[i] + w1 * chains.q0[i] + w2 * chains.q1[i] + z * stable.q[i])
    };
    let sample = |h: &[[f64; 2]; 2]| -> Result<Vec<(V3, f64)>> {
        map_ordered(&grid, opts.exec, |&(x, y)| {
            let p = point(h, x, y);
            let (w1, w2) = (x * w1_max, y * w2_max);
            let z = 0.5 * (h[0][0] * w1 * w1 + 2.0 * h[0][1] * w1 * w2 + h[1][1] * w2 * w2);
            field.eval(&p).map(|f| (f, z))
        })
        .into_iter()
        .collect()
    };

    let mut h1 = [[0.0; 2]; 2];
    let mut iterations = 0;
    let mut samples = sample(&h1)?;
    for _ in 0..20 {
        iterations += 1;
        let gs: Vec<f64> = samples
            .iter()
            .map(|(f, z)| dot(&stable.s, f) - stable.lambda0 * z)
            .collect();
        let (coef, _) = fit(&gs)?;
        let [g11, g12x2, g22] = unscale(&coef);
        let (h_new, _) = solve_homological(stable.lambda0, [g11, 0.5 * g12x2, g22])?;
        let change = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (h_new[i][j] - h1[i][j]).abs())
            .fold(0.0, f64::max);
        let size = h_new.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        h1 = h_new;
        samples = sample(&h1)?;
        if change <= 1e-10 * size.max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let u1: Vec<f64> = samples
        .iter()
        .zip(grid.iter())
        .map(|((f, _), &(_, y))| dot(&chains.p0, f) - y * w2_max)
        .collect();
    let u2: Vec<f64> = samples.iter().map(|(f, _)| dot(&chains.p1, f)).collect();
    let (c1, r1) = fit(&u1)?;
    let (c2, r2) = fit(&u2)?;
    let first = unscale(&c1);
    let second = unscale(&c2);
    Ok(FitResult {
        a2: second[0],
        // removing the w1² term of the first equation by a near-identity
        // change of variables adds twice its coefficient to b2
        b2: 2.0 * first[0] + second[1],
        radius: opts.radius,
        grid_points: grid.len(),
        condition,
        residual: r1.max(r2),
        h1,
        h1_iterations: iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFormOptions {
    pub step: f64,
    /// Population scale; the default fit radius is 1e-3 * scale.
    pub scale: f64,
    pub fit: Option<FitOptions>,
}

impl NormalFormOptions {
    pub fn with_scale(scale: f64) -> Self {
        NormalFormOptions {
            step: DEFAULT_B_STEP,
            scale,
            fit: Some(FitOptions {
                radius: 1e-3 * scale,
                points: 11,
                exec: Execution::default(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RichardsonCheck {
    pub step: f64,
    /// Largest relative change of B(q0,q1) and B(q1,q1) when halving the step.
    pub rel_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TbtReport {
    pub schema_version: u32,
    pub chains: JordanChains,
    pub stable: StableDirection,
    pub a2_coeff: f64,
    pub b2_coeff: f64,
    /// |a2| at or below `a2_zero_tol`, the finite-difference noise level.
    pub a2_is_zero: bool,
    pub a2_zero_tol: f64,
    #[serde(rename = "H1")]
    pub h1: [[f64; 2]; 2],
    pub homological_residual: f64,
    pub richardson: RichardsonCheck,
    pub fit: Option<FitResult>,
    /// |b2 - b2_fit| / |b2_fit|
    pub b2_discrepancy: Option<f64>,
    /// Set when the discrepancy exceeds 5%.
    pub b2_flagged: bool,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Normal-form report for a field with a double-zero rest point `x0`
/// whose Jacobian `a` has the third eigenvalue `lambda0`.
pub fn bt_quadratic_coeffs_with<F: VectorField<3> + Sync + ?Sized>(
    field: &F,
    x0: &V3,
    a: &Matrix3<f64>,
    lambda0: f64,
    opts: &NormalFormOptions,
) -> Result<TbtReport> {
    let chains = jordan_chains(a, lambda0)?;
    let stable = stable_direction(a, lambda0)?;
    let (a2, b2) = quadratic_coeffs(field, x0, &chains, opts.step)?;

    let b = |u: &V3, v: &V3, step: f64| bilinear_form(field, x0, u, v, step);
    let g = |u: &V3, v: &V3| -> Result<f64> { Ok(dot(&stable.s, &b(u, v, opts.step)?)) };
    let (h1, homological_residual) = solve_homological(
        lambda0,
        [
            g(&chains.q0, &chains.q0)?,
            g(&chains.q0, &chains.q1)?,
            g(&chains.q1, &chains.q1)?,
        ],
    )?;

    let mut rel_change: f64 = 0.0;
    for (u, v) in [(&chains.q0, &chains.q1), (&chains.q1, &chains.q1)] {
        let full = b(u, v, opts.step)?;
        let half = b(u, v, 0.5 * opts.step)?;
        let diff = norm(&std::array::from_fn(|i| full[i] - half[i]));
        let size = norm(&full).max(norm(&half));
        if size > 0.0 {
            rel_change = rel_change.max(diff / size);
        }
    }
    let b01 = b(&chains.q0, &chains.q1, opts.step)?;
    let a2_zero_tol = 1e-6 * norm(&b01) * norm(&chains.p1).max(1.0);

    let fit = match &opts.fit {
        Some(fo) => Some(reduced_fit_oracle(field, x0, &chains, &stable, fo)?),
        None => None,
    };
    let b2_discrepancy = fit.as_ref().map(|f| {
        if f.b2 == 0.0 {
            if b2 == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (b2 - f.b2).abs() / f.b2.abs()
        }
    });
    Ok(TbtReport {
        schema_version: REPORT_SCHEMA_VERSION,
        chains,
        stable,
        a2_coeff: a2,
        b2_coeff: b2,
        a2_is_zero: a2.abs() <= a2_zero_tol,
        a2_zero_tol,
        h1,
        homological_residual,
        richardson: RichardsonCheck {
            step: opts.step,
            rel_change,
        },
        b2_flagged: b2_discrepancy.is_some_and(|d| !(d <= 0.05)),
        fit,
        b2_discrepancy,
    })
}

/// Normal-form report of the reduced model at E0. The parameters are
/// expected to sit at the double-zero point (see
/// [`crate::bifurcation::locate_tbt_point`]); otherwise the Jordan
/// structure check fails.
pub fn bt_quadratic_coeffs(params: &ModelParams) -> Result<TbtReport> {
    bt_quadratic_coeffs_opts(params, &NormalFormOptions::with_scale(params.t_total))
}

pub fn bt_quadratic_coeffs_opts(params: &ModelParams, opts: &NormalFormOptions) -> Result<TbtReport> {
    params.validate()?;
    let e0 = disease_free_equilibrium(params).coords;
    let a = jacobian_analytic(&e0, params)?;
    let lambda0 = -(params.mu + 1.0);
    bt_quadratic_coeffs_with(&ReducedSystem { params: *params }, &e0.to_array(), &a, lambda0, opts)
}
