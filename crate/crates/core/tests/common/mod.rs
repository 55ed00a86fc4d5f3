//! Independent oracles shared by the integration and acceptance suites.
//!
//! The normal CDF here deliberately avoids the library's rational
//! approximation: adaptive Simpson quadrature of the density over the
//! body, a Laplace continued fraction for the tails. Agreement between
//! the two routes validates both.

#![allow(dead_code)]

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = normal_pdf(lm);
    let frm = normal_pdf(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        adaptive(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

fn integral_zero_to(x: f64) -> f64 {
    let fa = normal_pdf(0.0);
    let fb = normal_pdf(x);
    let fm = normal_pdf(0.5 * x);
    adaptive(0.0, x, fa, fm, fb, simpson(0.0, x, fa, fm, fb), 1e-16, 48)
}

/// Upper tail `P(Z > x)` for `x > 0` via the Laplace continued fraction
/// for the Mills ratio.
fn upper_tail(x: f64) -> f64 {
    let mut cf = 0.0_f64;
    for k in (1..=200u32).rev() {
        cf = k as f64 / (x + cf);
    }
    normal_pdf(x) / (x + cf)
}

/// Quadrature/continued-fraction oracle for the standard normal CDF.
pub fn normal_cdf_oracle(x: f64) -> f64 {
    if x >= 3.0 {
        1.0 - upper_tail(x)
    } else if x <= -3.0 {
        upper_tail(-x)
    } else {
        0.5 + integral_zero_to(x)
    }
}

/// Oracle evaluation of the normalized log-sigmoid.
pub fn normalized_sigmoid_oracle(b: f64, c: f64, alpha: f64, eps: f64) -> f64 {
    let floor = normal_cdf_oracle(b * eps.ln() + c);
    (normal_cdf_oracle(b * (alpha + eps).ln() + c) - floor) / (1.0 - floor)
}

/// Invert a monotone scalar function by long bisection.
pub fn invert_monotone(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
