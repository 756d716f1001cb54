//! Laser lineshape and delayed self-heterodyne spectra.
//!
//! Autocorrelations are written through the phase structure function
//! `D(x) = ∫ S_δν(f) (1 − cos 2πfx) / f² df`, so that `R_E(τ) = exp(−D(τ))` and
//! `R_i(τ) = exp(−2[D(τ) + D(t_d) − D(τ−t_d)/2 − D(τ+t_d)/2])`. White terms use `D = 2π²h0|x|`,
//! band-limited terms a sine-integral closed form, and servo bumps adaptive quadrature.
//! Spectra are normalized so that the continuous part plus the carrier weight integrates to 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::quad::{self, QuadError, Tolerance};
use crate::special::si;
use crate::spectra::{NoiseModel, SpectraError, BUMP_SPAN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeterodyneError {
    #[error("invalid heterodyne config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] SpectraError),
    #[error("tau_max = {tau_max:e} s leaves |R(τ) − R(∞)| = {residual:e} above the 1e-6 tail criterion")]
    InsufficientTauMax { tau_max: f64, residual: f64 },
    #[error("transform needs {needed} delay samples, above the limit of {limit}")]
    GridTooLarge { needed: usize, limit: usize },
    #[error("fc = {fc:e} Hz is above the compressed-regime threshold {threshold:e} Hz")]
    Regime { fc: f64, threshold: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Tail criterion on the autocorrelation envelope at `tau_max`.
pub const TAIL_CRITERION: f64 = 1e-6;
const MAX_DELAY_SAMPLES: usize = 1 << 22;

fn default_quad_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneConfig {
    #[serde(rename = "td_s")]
    pub delay_td: f64,
    /// Acousto-optic shift; spectra are always recentred so it only documents the measurement.
    #[serde(rename = "shift_hz", default, skip_serializing_if = "Option::is_none")]
    pub shift_nu_s: Option<f64>,
    #[serde(rename = "freq_grid_hz")]
    pub freq_grid: Vec<f64>,
    /// Transform range; chosen from the model when absent.
    #[serde(rename = "tau_max_s", default, skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
    #[serde(default = "default_quad_tolerance")]
    pub quad_tolerance: f64,
}

impl HeterodyneConfig {
    pub fn new(delay_td: f64, freq_grid: Vec<f64>) -> Self {
        Self { delay_td, shift_nu_s: None, freq_grid, tau_max: None, quad_tolerance: default_quad_tolerance() }
    }

    pub fn validate(&self) -> Result<(), HeterodyneError> {
        if !(self.delay_td > 0.0 && self.delay_td.is_finite()) {
            return Err(HeterodyneError::InvalidConfig("td_s must be > 0".into()));
        }
        if self.freq_grid.is_empty() || self.freq_grid.iter().any(|f| !f.is_finite()) {
            return Err(HeterodyneError::InvalidConfig("freq_grid_hz must be a nonempty list of finite values".into()));
        }
        if self.freq_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HeterodyneError::InvalidConfig("freq_grid_hz must be strictly increasing".into()));
        }
        if self.freq_grid[0] < 0.0 {
            let n = self.freq_grid.len();
            let scale = self.freq_grid.iter().fold(0.0f64, |m, f| m.max(f.abs()));
            let symmetric = (0..n).all(|i| (self.freq_grid[i] + self.freq_grid[n - 1 - i]).abs() <= 1e-9 * scale);
            if !symmetric {
                return Err(HeterodyneError::InvalidConfig(
                    "freq_grid_hz must be nonnegative or symmetric about 0".into(),
                ));
            }
        }
        if let Some(t) = self.tau_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(HeterodyneError::InvalidConfig("tau_max_s must be > 0".into()));
            }
        }
        if !(self.quad_tolerance > 0.0 && self.quad_tolerance < 1e-2) {
            return Err(HeterodyneError::InvalidConfig("quad_tolerance must lie in (0, 1e-2)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    UnitIntegral,
    CarrierOmitted,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    Exact,
    WeakNoise,
}

/// Sampled spectrum; a carrier at `f = 0` is kept as a separate weight, never as a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    #[serde(rename = "frequencies_hz")]
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization: Normalization,
    pub has_delta_at_zero: bool,
    pub delta_weight: f64,
}

impl SpectrumCurve {
    fn new(frequencies: Vec<f64>, values: Vec<f64>, delta_weight: f64) -> Self {
        Self {
            frequencies,
            values,
            normalization: Normalization::UnitIntegral,
            has_delta_at_zero: delta_weight != 0.0,
            delta_weight,
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Phase structure function of one band-limited or bump term, by closed form or quadrature.
fn leaf_structure(leaf: &NoiseModel, x: f64, rel_tol: f64) -> Result<f64, HeterodyneError> {
    let x = x.abs();
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(match *leaf {
        NoiseModel::White { h0 } => 2.0 * PI * PI * h0 * x,
        NoiseModel::BandLimitedWhite { h0, fc } => {
            let a = 2.0 * PI * x;
            2.0 * h0 * (a * si(a * fc) - 2.0 * (0.5 * a * fc).sin().powi(2) / fc)
        }
        NoiseModel::ServoBump { hg, sigma_g, fg } => {
            if hg == 0.0 {
                return Ok(0.0);
            }
            let x = bump_saturation(leaf).map_or(x, |xs| x.min(xs));
            let lo = (fg - BUMP_SPAN * sigma_g).max(0.0);
            let hi = fg + BUMP_SPAN * sigma_g;
            let mut pts = quad::panels(lo, hi, 0.5 / x, 100_000);
            pts.extend(leaf.breakpoints().into_iter().filter(|&p| p > lo && p < hi));
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let g = |f: f64| leaf.psd_delta_nu(f) * 4.0 * (PI * x).powi(2) * sinc(PI * f * x).powi(2);
            quad::integrate_with_breaks(g, &pts, Tolerance::new(1e-16, rel_tol))?.value
        }
        NoiseModel::Composite { .. } => unreachable!("leaves are flattened"),
    })
}

/// `D(x) = ∫ S_δν(f)(1 − cos 2πfx)/f² df`, so that `R_E(x) = exp(−D(x))`.
pub fn phase_structure(model: &NoiseModel, x: f64) -> Result<f64, HeterodyneError> {
    model.validate()?;
    model.leaves().iter().map(|l| leaf_structure(l, x, default_quad_tolerance())).sum()
}

/// `D(x)` by direct quadrature for every term, with the flat remainder beyond the last feature
/// of white terms added in closed form.
pub fn phase_structure_quadrature(model: &NoiseModel, x: f64) -> Result<f64, HeterodyneError> {
    model.validate()?;
    let x = x.abs();
    if x == 0.0 {
        return Ok(0.0);
    }
    let a = 2.0 * PI * x;
    let upper = model.max_frequency().unwrap_or(0.0).max(model.breakpoints().last().copied().unwrap_or(0.0)).max(50.0 / x);
    let mut pts = quad::panels(0.0, upper, 0.5 / x, 200_000);
    pts.extend(model.breakpoints());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let g = |f: f64| model.psd_delta_nu(f) * a * a * sinc(0.5 * a * f).powi(2);
    let body = quad::integrate_with_breaks(g, &pts, Tolerance::new(1e-16, 1e-12))?.value;
    // ∫_F^∞ (1 − cos af)/f² df = (1 − cos aF)/F + a(π/2 − Si(aF))
    let white: f64 = model
        .leaves()
        .iter()
        .map(|l| match **l {
            NoiseModel::White { h0 } => h0,
            _ => 0.0,
        })
        .sum();
    let tail = (1.0 - (a * upper).cos()) / upper + a * (0.5 * PI - si(a * upper));
    Ok(body + 2.0 * white * tail)
}

/// Field autocorrelation `R_E(τ)` normalized to `R_E(0) = 1` with the carrier removed.
pub fn autocorr_re(model: &NoiseModel, tau: f64) -> Result<f64, HeterodyneError> {
    Ok((-phase_structure(model, tau)?).exp())
}

/// Recentred self-heterodyne autocorrelation `R_i(τ)` for delay `td`.
pub fn self_het_autocorr(model: &NoiseModel, tau: f64, td: f64) -> Result<f64, HeterodyneError> {
    model.validate()?;
    if !(td > 0.0) {
        return Err(HeterodyneError::InvalidConfig("td_s must be > 0".into()));
    }
    let tau = tau.abs();
    let mut exponent = 0.0;
    for leaf in model.leaves() {
        exponent += match *leaf {
            NoiseModel::White { h0 } => 2.0 * PI * PI * h0 * (2.0 * td + 2.0 * tau - (tau - td).abs() - (tau + td)),
            _ => {
                let d = |x: f64| leaf_structure(leaf, x, default_quad_tolerance());
                2.0 * (d(tau)? + d(td)? - 0.5 * d(tau - td)? - 0.5 * d(tau + td)?)
            }
        };
    }
    Ok((-exponent).exp())
}

/// `∫_0^{2nh} g(τ) cos(ωτ) dτ` by Filon's rule on `2n + 1` equally spaced samples.
pub fn filon_cos(g: &[f64], h: f64, omega: f64) -> f64 {
    let n = g.len();
    assert!(n >= 3 && n % 2 == 1, "Filon's rule needs an odd number of samples");
    let theta = omega * h;
    let (alpha, beta, gamma) = if theta.abs() < 0.05 {
        let t2 = theta * theta;
        (
            theta * t2 * (2.0 / 45.0 - t2 * (2.0 / 315.0 - t2 * 2.0 / 4725.0)),
            2.0 / 3.0 + t2 * (2.0 / 15.0 - t2 * (4.0 / 105.0 - t2 * 2.0 / 567.0)),
            4.0 / 3.0 - t2 * (2.0 / 15.0 - t2 * (1.0 / 210.0 - t2 / 11340.0)),
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t3 = theta.powi(3);
        (
            (theta * theta + theta * s * c - 2.0 * s * s) / t3,
            2.0 * (theta * (1.0 + c * c) - 2.0 * s * c) / t3,
            4.0 * (s - theta * c) / t3,
        )
    };
    let mut even = 0.0;
    let mut odd = 0.0;
    // cos(kθ) by rotation, re-anchored periodically to bound the drift
    let (step_s, step_c) = theta.sin_cos();
    let (mut s, mut c) = (0.0, 1.0);
    for (k, v) in g.iter().enumerate() {
        if k % 256 == 0 {
            (s, c) = (theta * k as f64).sin_cos();
        }
        let term = v * c;
        (s, c) = (s * step_c + c * step_s, c * step_c - s * step_s);
        if k % 2 == 1 {
            odd += term;
        } else if k == 0 || k == n - 1 {
            even += 0.5 * term;
        } else {
            even += term;
        }
    }
    let end = (n - 1) as f64 * h;
    h * (alpha * g[n - 1] * (omega * end).sin() + beta * even + gamma * odd)
}

fn white_level(model: &NoiseModel) -> f64 {
    model
        .leaves()
        .iter()
        .map(|l| match **l {
            NoiseModel::White { h0 } => h0,
            _ => 0.0,
        })
        .sum()
}

fn non_white(model: &NoiseModel) -> Vec<&NoiseModel> {
    model
        .leaves()
        .into_iter()
        .filter(|l| match **l {
            NoiseModel::White { .. } => false,
            NoiseModel::BandLimitedWhite { h0, .. } => h0 > 0.0,
            NoiseModel::ServoBump { hg, .. } => hg > 0.0,
            NoiseModel::Composite { .. } => false,
        })
        .collect()
}

/// Delay-sample spacing that resolves every term's variation.
fn delay_step(model: &NoiseModel, white: f64) -> f64 {
    let mut h = f64::INFINITY;
    if white > 0.0 {
        h = h.min(5e-5 / (2.0 * PI * PI * white));
    }
    for leaf in non_white(model) {
        h = h.min(match *leaf {
            NoiseModel::BandLimitedWhite { h0, fc } => (1.0 / (40.0 * fc)).min(1e-3 / (2.0 * PI * PI * h0)),
            NoiseModel::ServoBump { sigma_g, fg, .. } => 1.0 / (40.0 * (fg + BUMP_SPAN * sigma_g)),
            _ => f64::INFINITY,
        });
    }
    h
}

/// Delay beyond which the non-white terms' contribution to the autocorrelation has settled.
fn settling_time(model: &NoiseModel, criterion: f64) -> f64 {
    let mut t: f64 = 0.0;
    for leaf in non_white(model) {
        t = t.max(match *leaf {
            NoiseModel::BandLimitedWhite { h0, fc } => 4.0 * h0 / (PI * fc * fc * criterion),
            NoiseModel::ServoBump { hg, sigma_g, fg } => {
                let s = crate::spectra::servo_bump_power(hg, sigma_g, fg).s_g.max(hg * sigma_g / (fg * fg));
                let r = 8.0 * s / criterion;
                if r > 1.0 {
                    (r.ln() / (2.0 * PI * PI)).sqrt() / sigma_g * 1.5
                } else {
                    0.0
                }
            }
            _ => 0.0,
        });
    }
    t
}

/// Delay beyond which a bump's structure function is constant to double precision.
fn bump_saturation(leaf: &NoiseModel) -> Option<f64> {
    match *leaf {
        NoiseModel::ServoBump { sigma_g, fg, .. } if fg > BUMP_SPAN * sigma_g => Some(2.0 / sigma_g),
        _ => None,
    }
}

/// Structure function of the non-white terms at `k·h`, `k = 0..n`.
fn structure_grid(terms: &[&NoiseModel], h: f64, n: usize, rel_tol: f64) -> Result<Vec<f64>, HeterodyneError> {
    let mut total = vec![0.0; n];
    for leaf in terms {
        let sat = bump_saturation(leaf);
        let plateau = sat.map(|x| leaf_structure(leaf, x, rel_tol)).transpose()?;
        let d: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| {
                let x = k as f64 * h;
                match (sat, plateau) {
                    (Some(xs), Some(p)) if x >= xs => Ok(p),
                    _ => leaf_structure(leaf, x, rel_tol),
                }
            })
            .collect::<Result<_, HeterodyneError>>()?;
        total.iter_mut().zip(d).for_each(|(t, v)| *t += v);
    }
    Ok(total)
}

fn transform(
    grid: &[f64],
    samples: &[f64],
    h: f64,
    tau_max: f64,
    tail_start: usize,
    tail_ref: f64,
) -> Result<Vec<f64>, HeterodyneError> {
    let residual = samples[tail_start..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > TAIL_CRITERION * tail_ref.max(1e-300) && residual > 0.0 {
        return Err(HeterodyneError::InsufficientTauMax { tau_max, residual });
    }
    Ok(grid
        .par_iter()
        .map(|f| (2.0 * filon_cos(samples, h, 2.0 * PI * f.abs())).max(0.0))
        .collect())
}

fn even_count(span: f64, h: f64) -> usize {
    let n = (span / h).ceil() as usize;
    (n + n % 2).max(2)
}

/// Laser lineshape `S_E(f)` normalized to unit integral.
pub fn lineshape_se(model: &NoiseModel, cfg: &HeterodyneConfig, mode: SpectrumMode) -> Result<SpectrumCurve, HeterodyneError> {
    model.validate()?;
    cfg.validate()?;
    let white = white_level(model);
    let terms = non_white(model);
    let freqs = cfg.freq_grid.clone();
    if mode == SpectrumMode::WeakNoise {
        let mut delta = if white > 0.0 { 0.0 } else { 1.0 };
        let mut values = vec![0.0; freqs.len()];
        for leaf in &terms {
            match **leaf {
                NoiseModel::ServoBump { hg, sigma_g, fg } => {
                    if white == 0.0 {
                        delta -= crate::spectra::servo_bump_power(hg, sigma_g, fg).s_g;
                    }
                    for (v, f) in values.iter_mut().zip(&freqs) {
                        *v += leaf.psd_delta_nu(*f) / (fg * fg);
                    }
                }
                _ => {
                    return Err(HeterodyneError::InvalidConfig(
                        "the weak-noise lineshape supports white and servo-bump terms only".into(),
                    ))
                }
            }
        }
        if white > 0.0 {
            for (v, f) in values.iter_mut().zip(&freqs) {
                *v += white / (f * f + (PI * white).powi(2));
            }
        }
        return Ok(SpectrumCurve::new(freqs, values, delta));
    }
    if terms.is_empty() {
        let values = if white > 0.0 {
            freqs.iter().map(|f| white / (f * f + (PI * white).powi(2))).collect()
        } else {
            vec![0.0; freqs.len()]
        };
        return Ok(SpectrumCurve::new(freqs, values, if white > 0.0 { 0.0 } else { 1.0 }));
    }
    let s0 = model.psd_delta_nu(0.0);
    let h = delay_step(model, white.max(s0));
    let decay = if s0 > 0.0 { (1e8f64).ln() / (2.0 * PI * PI * s0) } else { 0.0 };
    let tau_max = cfg.tau_max.unwrap_or_else(|| decay.max(settling_time(model, 1e-8)).max(20.0 * h));
    let n = even_count(tau_max, h);
    if n + 1 > MAX_DELAY_SAMPLES {
        return Err(HeterodyneError::GridTooLarge { needed: n + 1, limit: MAX_DELAY_SAMPLES });
    }
    let h = tau_max / n as f64;
    let d = structure_grid(&terms, h, n + 1, cfg.quad_tolerance)?;
    let r: Vec<f64> = (0..=n).map(|k| (-2.0 * PI * PI * white * k as f64 * h - d[k]).exp()).collect();
    let r_inf = if s0 > 0.0 {
        0.0
    } else {
        let d_inf: f64 = terms
            .iter()
            .map(|l| match **l {
                NoiseModel::ServoBump { .. } => {
                    let lo = l.breakpoints()[0];
                    let pts: Vec<f64> = l.breakpoints().into_iter().filter(|&p| p >= lo).collect();
                    quad::integrate_with_breaks(|f| 2.0 * l.psd_delta_nu(f) / (f * f), &pts, Tolerance::new(1e-16, 1e-12))
                        .map(|e| e.value)
                }
                _ => Ok(0.0),
            })
            .sum::<Result<f64, QuadError>>()?;
        (-d_inf).exp()
    };
    let samples: Vec<f64> = r.iter().map(|v| v - r_inf).collect();
    let tail_start = (n as f64 * 0.95) as usize;
    let values = transform(&freqs, &samples, h, tau_max, tail_start, 1.0)?;
    Ok(SpectrumCurve::new(freqs, values, r_inf))
}

/// Continuous part of the white-noise self-heterodyne spectrum.
pub fn self_het_white(h0: f64, td: f64, f: f64) -> f64 {
    if h0 == 0.0 {
        return 0.0;
    }
    let lor = 2.0 * h0 / (f * f + (2.0 * PI * h0).powi(2));
    let carrier = (-4.0 * PI * PI * h0 * td).exp();
    // (2πh0/f) sin(2πf td) written regularly at f = 0
    let ratio = 4.0 * PI * PI * h0 * td * sinc(2.0 * PI * f * td);
    lor * (1.0 - carrier * ((2.0 * PI * f * td).cos() + ratio))
}

/// Composite fitting form: white closed form plus narrow servo bumps `(hg, sigma_g, fg)`, each
/// weighted by `4 sin²(πf t_d) / fg²`.
pub fn self_het_white_bumps(h0: f64, bumps: &[(f64, f64, f64)], td: f64, f: f64) -> f64 {
    let scallop = (PI * f * td).sin().powi(2);
    let mut v = self_het_white(h0, td, f);
    for &(hg, sigma_g, fg) in bumps {
        let g = |x: f64| (-x * x / (2.0 * sigma_g * sigma_g)).exp();
        v += 4.0 * hg / (fg * fg) * scallop * (g(f - fg) + g(f + fg));
    }
    v
}

/// Recentred self-heterodyne spectrum `S_i(f)` at one satellite peak.
///
/// `WeakNoise` keeps white terms exact and expands the rest to first order,
/// `4 sin²(πf t_d) S_δν(f)/f²` with carrier weight `1 − 2D(t_d)`.
pub fn self_het_spectrum(model: &NoiseModel, cfg: &HeterodyneConfig, mode: SpectrumMode) -> Result<SpectrumCurve, HeterodyneError> {
    model.validate()?;
    cfg.validate()?;
    let td = cfg.delay_td;
    let white = white_level(model);
    let terms = non_white(model);
    let freqs = cfg.freq_grid.clone();
    let white_carrier = (-4.0 * PI * PI * white * td).exp();
    if mode == SpectrumMode::WeakNoise {
        let d_td: f64 = terms.iter().map(|l| leaf_structure(l, td, cfg.quad_tolerance)).sum::<Result<f64, _>>()?;
        let values = freqs
            .iter()
            .map(|&f| {
                let scallop = if f == 0.0 { (PI * td).powi(2) } else { (PI * f * td).sin().powi(2) / (f * f) };
                let rest: f64 = terms.iter().map(|l| l.psd_delta_nu(f)).sum();
                self_het_white(white, td, f) + 4.0 * scallop * rest
            })
            .collect();
        return Ok(SpectrumCurve::new(freqs, values, white_carrier * (1.0 - 2.0 * d_td)));
    }
    let settle = settling_time(model, 1e-8);
    let tau_max = cfg.tau_max.unwrap_or(td + settle).max(td);
    let h_target = delay_step(model, white).min(td / 64.0);
    // t_d must sit on an even node so the kink there is a panel boundary
    let m = (td / (2.0 * h_target)).ceil() as usize;
    let h = td / (2 * m) as f64;
    let n = 2 * (((tau_max - td) / (2.0 * h)).ceil() as usize) + 2 * m;
    let tau_max = n as f64 * h;
    if n + 2 * m + 1 > MAX_DELAY_SAMPLES {
        return Err(HeterodyneError::GridTooLarge { needed: n + 2 * m + 1, limit: MAX_DELAY_SAMPLES });
    }
    let d = structure_grid(&terms, h, n + 2 * m + 1, cfg.quad_tolerance)?;
    let d_td = d[2 * m];
    let r_inf = white_carrier * (-2.0 * d_td).exp();
    let samples: Vec<f64> = (0..=n)
        .map(|k| {
            let tau = k as f64 * h;
            let w = 2.0 * PI * PI * white * (2.0 * td + 2.0 * tau - (tau - td).abs() - (tau + td));
            let rest = 2.0 * (d[k] + d_td - 0.5 * d[k.abs_diff(2 * m)] - 0.5 * d[k + 2 * m]);
            (-(w + rest)).exp() - r_inf
        })
        .collect();
    let tail_start = if terms.is_empty() { n } else { 2 * m + ((n - 2 * m) as f64 * 0.95) as usize };
    let values = transform(&freqs, &samples, h, tau_max, tail_start, 1.0)?;
    Ok(SpectrumCurve::new(freqs, values, r_inf))
}

/// Gaussian lineshape and self-heterodyne peak for slow, strong band-limited noise, each with
/// unit integral.
pub fn quasistatic_spectra(h0: f64, fc: f64, td: f64, f: f64) -> Result<(f64, f64), HeterodyneError> {
    if !(h0 > 0.0 && fc > 0.0 && td > 0.0) {
        return Err(HeterodyneError::InvalidConfig("h0, fc and td must be > 0".into()));
    }
    let threshold = PI * PI * h0 / (8.0 * 2f64.ln());
    if fc >= threshold {
        return Err(HeterodyneError::Regime { fc, threshold });
    }
    let se = (-f * f / (4.0 * h0 * fc)).exp() / (4.0 * PI * h0 * fc).sqrt();
    let w = 16.0 * PI * PI * h0 * td * td * fc.powi(3);
    let si_val = (3.0 / (PI * w)).sqrt() * (-3.0 * f * f / w).exp();
    Ok((se, si_val))
}
