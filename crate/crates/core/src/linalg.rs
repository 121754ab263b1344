//! Small dense linear algebra: closed-form 3x3 eigenvalues and condition
//! estimates.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

/// Coefficients (a, b, c) of the monic characteristic polynomial
/// λ³ + aλ² + bλ + c of a 3x3 matrix.
pub fn char_poly(m: &Matrix3<f64>) -> [f64; 3] {
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let minors = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)])
        + (m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)])
        + (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)]);
    [-tr, minors, -m.determinant()]
}

pub fn eval_char_poly(coeffs: &[f64; 3], z: Complex64) -> Complex64 {
    let [a, b, c] = *coeffs;
    ((z + a) * z + b) * z + c
}

#[inline]
fn poly(coeffs: &[f64; 3], x: f64) -> f64 {
    let [a, b, c] = *coeffs;
    ((x + a) * x + b) * x + c
}

/// One real root of the cubic, the largest in magnitude when all three are
/// real, so that deflation is well conditioned.
fn real_root(coeffs: &[f64; 3]) -> f64 {
    let [a, b, c] = *coeffs;
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);

    let mut x = if p == 0.0 && q == 0.0 {
        -shift
    } else if disc <= 0.0 {
        // three real roots
        let r = (-p / 3.0).sqrt();
        let arg = if r > 0.0 {
            (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let phi = arg.acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi - 2.0 * PI * k as f64) / 3.0).cos())
            .map(|t| t - shift)
            .max_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap_or(Ordering::Equal))
            .unwrap()
    } else {
        let sq = disc.sqrt();
        let w = -q / 2.0 - q.signum() * sq;
        let u = w.cbrt();
        let t = if u == 0.0 { 0.0 } else { u - p / (3.0 * u) };
        t - shift
    };

    // Newton polish, accepted only while the residual drops
    let mut fx = poly(coeffs, x);
    for _ in 0..4 {
        if fx == 0.0 {
            break;
        }
        let d = (3.0 * x + 2.0 * a) * x + b;
        if d == 0.0 {
            break;
        }
        let xn = x - fx / d;
        let fn_ = poly(coeffs, xn);
        if fn_.abs() < fx.abs() {
            x = xn;
            fx = fn_;
        } else {
            break;
        }
    }
    x
}

fn sort_eigs(v: &mut [Complex64]) {
    v.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap_or(Ordering::Equal)
            .then(y.im.partial_cmp(&x.im).unwrap_or(Ordering::Equal))
    });
}

/// Eigenvalues of a real 3x3 matrix as roots of its characteristic cubic,
/// sorted by real part descending, then imaginary part descending. Complex
/// roots come out as exact conjugate pairs.
pub fn eigenvalues_3x3(m: &Matrix3<f64>) -> [Complex64; 3] {
    let coeffs = char_poly(m);
    let [a, b, c] = coeffs;
    let r = real_root(&coeffs);

    // deflate to λ² + d1 λ + d0
    let d1 = a + r;
    let d0 = if r.abs() > 1.0 { -c / r } else { b + r * d1 };
    let half = d1 / 2.0;
    let disc = half * half - d0;
    let (z1, z2) = if disc >= 0.0 {
        let sq = disc.sqrt();
        let big = -(half + if half >= 0.0 { sq } else { -sq });
        if big == 0.0 {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (Complex64::new(big, 0.0), Complex64::new(d0 / big, 0.0))
        }
    } else {
        let im = (-disc).sqrt();
        (Complex64::new(-half, im), Complex64::new(-half, -im))
    };

    let mut out = [Complex64::new(r, 0.0), z1, z2];
    sort_eigs(&mut out);
    out
}

/// Ratio of largest to smallest singular value.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Singular values sorted descending.
pub fn singular_values3(m: &Matrix3<f64>) -> [f64; 3] {
    let sv = m.svd(false, false).singular_values;
    let mut v = [sv[0], sv[1], sv[2]];
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal() {
        let e = eigenvalues_3x3(&Matrix3::from_diagonal(&[1.0, 2.0, 3.0].into()));
        let re: Vec<f64> = e.iter().map(|z| z.re).collect();
        assert!((re[0] - 3.0).abs() < 1e-14);
        assert!((re[1] - 2.0).abs() < 1e-14);
        assert!((re[2] - 1.0).abs() < 1e-14);
        assert!(e.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn nilpotent_block() {
        let m = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        let e = eigenvalues_3x3(&m);
        assert_eq!(e[0], Complex64::new(0.0, 0.0));
        assert_eq!(e[1], Complex64::new(0.0, 0.0));
        assert_eq!(e[2], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn rotation_gives_conjugate_pair() {
        let m = Matrix3::new(-0.5, -0.2, 0.0, 0.2, -0.5, 0.0, 0.0, 0.0, -1.0);
        let e = eigenvalues_3x3(&m);
        assert!((e[0] - Complex64::new(-0.5, 0.2)).norm() < 1e-14);
        assert_eq!(e[1], e[0].conj());
        assert!((e[2].re + 1.0).abs() < 1e-14);
    }

    #[test]
    fn triple_zero() {
        let e = eigenvalues_3x3(&Matrix3::zeros());
        assert!(e.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn repeated_real_root() {
        let m = Matrix3::from_diagonal(&[-2.0, -2.0, 5.0].into());
        let e = eigenvalues_3x3(&m);
        assert!((e[0].re - 5.0).abs() < 1e-13);
        assert!((e[1] - Complex64::new(-2.0, 0.0)).norm() < 1e-7);
        assert!((e[2] - Complex64::new(-2.0, 0.0)).norm() < 1e-7);
    }
}
