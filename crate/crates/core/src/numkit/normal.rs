//! Standard normal density, distribution and quantile functions.
//!
//! The distribution function uses Marsaglia's Taylor series
//! `Φ(x) = 1/2 + φ(x)·(x + x³/3 + x⁵/(3·5) + …)` on `|x| ≤ 5`, where all
//! terms are positive and the truncation error is below 1e-16, and the
//! Laplace continued fraction for the Mills ratio `(1 − Φ(x))/φ(x)` in the
//! tails, which keeps relative accuracy down to underflow. Absolute error
//! is below 1e-15 everywhere.
//!
//! The quantile starts from Acklam's rational approximation (relative
//! error 1.15e-9) and applies two Halley corrections against the
//! distribution function above.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SERIES_LIMIT: f64 = 5.0;

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.abs() <= SERIES_LIMIT {
        0.5 + normal_pdf(x) * series(x)
    } else if x > 0.0 {
        1.0 - upper_tail(x)
    } else {
        upper_tail(-x)
    }
}

/// `(Φ(x), Φ(−x))` from one evaluation; bit-identical to two calls of
/// [`normal_cdf`].
pub fn normal_cdf_pair(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if x.abs() <= SERIES_LIMIT {
        let s = normal_pdf(x) * series(x);
        (0.5 + s, 0.5 - s)
    } else {
        let t = upper_tail(x.abs());
        if x > 0.0 {
            (1.0 - t, t)
        } else {
            (t, 1.0 - t)
        }
    }
}

/// `1 − Φ(x)` without cancellation for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

fn series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    loop {
        k += 2.0;
        term *= x2 / k;
        let next = sum + term;
        if next == sum {
            return sum;
        }
        sum = next;
    }
}

/// `1 − Φ(x)` for `x > SERIES_LIMIT` via the Mills-ratio continued fraction
/// `R(x) = 1/(x + 1/(x + 2/(x + 3/(x + …))))`, evaluated bottom-up.
fn upper_tail(x: f64) -> f64 {
    if x > 38.5 {
        return 0.0;
    }
    let mut frac = x;
    for k in (1..=120).rev() {
        frac = x + k as f64 / frac;
    }
    normal_pdf(x) / frac
}

const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

fn acklam(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Inverse of [`normal_cdf`] on the open interval (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Refine in the tail nearest to p so the residual keeps relative precision.
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    let mut x = acklam(target);
    for _ in 0..2 {
        let e = normal_cdf(x) - target;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(if upper { -x } else { x })
}
