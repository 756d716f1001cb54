//! Sine and cosine integrals.
//!
//! `Si(x) = ∫_0^x sin t / t dt`, `Ci(x) = -∫_x^∞ cos t / t dt`.
//! Power series below |x| = 4, a continued fraction for the exponential integral `E1(ix)` above.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 4.0;

/// Sine integral; odd in `x`.
pub fn si(x: f64) -> f64 {
    if x < 0.0 {
        return -si(-x);
    }
    if x < SERIES_LIMIT {
        si_series(x)
    } else {
        let (_, s) = continued_fraction(x);
        s
    }
}

/// Cosine integral for `x > 0`. Returns `-inf` at zero and NaN for negative input.
pub fn ci(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < SERIES_LIMIT {
        ci_series(x)
    } else {
        let (c, _) = continued_fraction(x);
        c
    }
}

/// `Ci(x) - ln x` for `x >= 0`, finite at zero where it equals Euler's constant.
pub fn ci_minus_ln(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x < SERIES_LIMIT {
        EULER_GAMMA + ci_series_sum(x)
    } else {
        ci(x) - x.ln()
    }
}

fn si_series(x: f64) -> f64 {
    // Σ (-1)^k x^(2k+1) / ((2k+1)(2k+1)!)
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0usize;
    loop {
        k += 1;
        let n = (2 * k) as f64;
        term *= -x2 / (n * (n + 1.0));
        let add = term / (n + 1.0);
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() || k > 200 {
            break;
        }
    }
    sum
}

fn ci_series(x: f64) -> f64 {
    EULER_GAMMA + x.ln() + ci_series_sum(x)
}

// Σ_{k≥1} (-1)^k x^(2k) / (2k (2k)!)
fn ci_series_sum(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        k += 1;
        let n = (2 * k) as f64;
        term *= -x2 / ((n - 1.0) * n);
        let add = term / n;
        sum += add;
        if add.abs() <= 1e-17 * (sum.abs() + 1.0) || k > 200 {
            break;
        }
    }
    sum
}

/// Modified Lentz evaluation of `E1(ix) = -Ci(x) + i(Si(x) - π/2)`; returns `(Ci, Si)`.
fn continued_fraction(x: f64) -> (f64, f64) {
    let tiny = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = Complex64::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 2..10_000 {
        let a = -((i - 1) * (i - 1)) as f64;
        b += 2.0;
        d = Complex64::new(1.0, 0.0) / (d * a + b);
        c = b + Complex64::new(a, 0.0) / c;
        let del = c * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < 1e-16 {
            break;
        }
    }
    h *= Complex64::new(x.cos(), -x.sin());
    let cs = -h.conj() + Complex64::new(0.0, FRAC_PI_2);
    (cs.re, cs.im)
}
