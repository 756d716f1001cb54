//! Adaptive Dormand-Prince 5(4) for small complex linear systems.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error("step size underflow at t = {t:e}")]
    StepTooSmall { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t:e}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t:e}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    DormandPrince54,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step in seconds; `None` leaves it to the error control.
    #[serde(rename = "max_step_s", default)]
    pub max_step: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    50_000_000
}

impl IntegratorConfig {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            method: Method::DormandPrince54,
            rel_tol,
            abs_tol,
            max_step: None,
            max_steps: default_max_steps(),
        }
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = Some(max_step);
        self
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-3) {
                return Err(OdeError::InvalidConfig(format!("{name} must lie in (0, 1e-3], got {v}")));
            }
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(OdeError::InvalidConfig("max_step must be > 0".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(OdeError::InvalidConfig("max_steps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Solution<const N: usize> {
    pub y: [Complex64; N],
    pub accepted: usize,
    pub rejected: usize,
    /// Largest `|y_k|²` seen at accepted step ends, per component.
    pub max_population: [f64; N],
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn comb<const N: usize>(y: &[Complex64; N], h: f64, terms: &[(f64, &[Complex64; N])]) -> [Complex64; N] {
    let mut out = *y;
    for (w, k) in terms {
        let s = h * w;
        for i in 0..N {
            out[i] += k[i] * s;
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`.
pub fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [Complex64; N],
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Solution<N>, OdeError>
where
    F: FnMut(f64, &[Complex64; N]) -> [Complex64; N],
{
    cfg.validate()?;
    let mut sol = Solution {
        y: y0,
        accepted: 0,
        rejected: 0,
        max_population: y0.map(|c| c.norm_sqr()),
    };
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(sol);
    }
    let hmax = cfg.max_step.unwrap_or(span).min(span);
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&y, &k1, cfg).min(hmax);
    let hmin = 1e-14 * span.max(t0.abs());

    while t < t1 {
        if sol.accepted + sol.rejected >= cfg.max_steps {
            return Err(OdeError::TooManySteps { t, max_steps: cfg.max_steps });
        }
        let last = t + h >= t1 || (t1 - (t + h)) < 1e-12 * span;
        if last {
            h = t1 - t;
        }
        let k2 = f(t + C2 * h, &comb(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &comb(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &comb(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(t + C5 * h, &comb(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(t + h, &comb(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = comb(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let t_new = if last { t1 } else { t + h };
        let k7 = f(t_new, &y_new);

        let mut err: f64 = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / scale);
        }
        if !err.is_finite() || y_new.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            if h <= hmin {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.2;
            sol.rejected += 1;
            continue;
        }
        if err <= 1.0 {
            t = t_new;
            y = y_new;
            k1 = k7;
            sol.accepted += 1;
            for i in 0..N {
                sol.max_population[i] = sol.max_population[i].max(y[i].norm_sqr());
            }
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * grow).min(hmax);
        } else {
            sol.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            if h < hmin {
                return Err(OdeError::StepTooSmall { t });
            }
        }
    }
    sol.y = y;
    Ok(sol)
}

fn initial_step<const N: usize>(y: &[Complex64; N], dy: &[Complex64; N], cfg: &IntegratorConfig) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for i in 0..N {
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].norm();
        d0 = d0.max(y[i].norm() / sc);
        d1 = d1.max(dy[i].norm() / sc);
    }
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * cfg.max_step.unwrap_or(1.0)
    } else {
        0.01 * d0 / d1
    }
}
