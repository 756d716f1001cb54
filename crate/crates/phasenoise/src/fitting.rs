//! Ingestion and least-squares fitting of measured self-heterodyne spectra.
//!
//! The pipeline is: ingest and recentre, fit the central peak, rescale the record to unit
//! total power, then fit white noise plus Gaussian servo bumps to the wings. All fits are done
//! on `ln(psd)` with uniform weights, and every parameter is fit through its logarithm so the
//! results stay positive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use thiserror::Error;

use crate::analytic::{error_servo_1p, error_white_1p, Averaging};
use crate::heterodyne::self_het_white_bumps;
use crate::spectra::{servo_bump_power, NoiseModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("malformed spectrum: {0}")]
    Malformed(String),
    #[error("no dominant peak: maximum {peak:e} is not well above the median {median:e} or sits on the grid edge")]
    NoDominantPeak { peak: f64, median: f64 },
    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    #[serde(rename = "rbw_hz")]
    pub rbw: f64,
    #[serde(rename = "td_s")]
    pub delay_td: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    #[serde(rename = "frequencies_hz")]
    pub frequencies: Vec<f64>,
    pub psd: Vec<f64>,
    #[serde(rename = "rbw_hz")]
    pub rbw: f64,
    #[serde(rename = "td_s")]
    pub delay_td: f64,
    #[serde(rename = "center_found_hz")]
    pub center_found: f64,
    pub normalization_applied: bool,
}

const MIN_ROWS: usize = 50;
const PEAK_DOMINANCE: f64 = 10.0;

fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curvature = (d2 - d1) / (x[2] - x[0]);
    if curvature >= 0.0 {
        return x[1];
    }
    // vertex of the interpolating parabola
    let v = 0.5 * (x[0] + x[1]) - d1 / (2.0 * curvature);
    v.clamp(x[0], x[2])
}

/// Validates a raw analyzer trace and recentres it on its dominant peak.
pub fn ingest_spectrum(frequencies: &[f64], psd: &[f64], meta: SpectrumMeta) -> Result<SpectrumRecord, FitError> {
    if frequencies.len() != psd.len() {
        return Err(FitError::Malformed(format!("{} frequencies but {} psd values", frequencies.len(), psd.len())));
    }
    if frequencies.len() < MIN_ROWS {
        return Err(FitError::Malformed(format!("need at least {MIN_ROWS} rows, got {}", frequencies.len())));
    }
    if frequencies.iter().chain(psd).any(|v| !v.is_finite()) {
        return Err(FitError::Malformed("non-finite value".into()));
    }
    if frequencies.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::Malformed("frequencies must be strictly increasing".into()));
    }
    if psd.iter().any(|&p| p < 0.0) {
        return Err(FitError::Malformed("psd must be nonnegative".into()));
    }
    if !(meta.rbw > 0.0 && meta.delay_td > 0.0) {
        return Err(FitError::Malformed("rbw_hz and td_s must be > 0".into()));
    }
    let (imax, &peak) = psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let mut sorted = psd.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if imax == 0 || imax == psd.len() - 1 || peak < PEAK_DOMINANCE * median || peak == 0.0 {
        return Err(FitError::NoDominantPeak { peak, median });
    }
    let floor = peak * 1e-300;
    let ly = [psd[imax - 1], psd[imax], psd[imax + 1]].map(|v| v.max(floor).ln());
    let center = parabola_vertex([frequencies[imax - 1], frequencies[imax], frequencies[imax + 1]], ly);
    Ok(SpectrumRecord {
        frequencies: frequencies.iter().map(|f| f - center).collect(),
        psd: psd.to_vec(),
        rbw: meta.rbw,
        delay_td: meta.delay_td,
        center_found: center,
        normalization_applied: false,
    })
}

/// Result of a Levenberg-Marquardt minimization of `½|r(x)|²`.
#[derive(Debug, Clone)]
struct LmSolution {
    x: DVector<f64>,
    cost: f64,
    jacobian: DMatrix<f64>,
    residuals: DVector<f64>,
    converged: bool,
    iterations: usize,
}

fn jacobian<F: Fn(&DVector<f64>) -> DVector<f64>>(r: &F, x: &DVector<f64>, r0: &DVector<f64>) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(r0.len(), x.len());
    for c in 0..x.len() {
        let step = 1e-7 * x[c].abs().max(1.0);
        let mut xp = x.clone();
        xp[c] += step;
        let rp = r(&xp);
        j.set_column(c, &((rp - r0) / step));
    }
    j
}

fn levenberg_marquardt<F: Fn(&DVector<f64>) -> DVector<f64>>(r: F, x0: DVector<f64>, max_iter: usize) -> LmSolution {
    let mut x = x0;
    let mut res = r(&x);
    let mut cost = 0.5 * res.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = jacobian(&r, &x, &res);
    while iterations < max_iter {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &res;
        if grad.amax() < 1e-14 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let xn = &x + &step;
            let rn = r(&xn);
            let cn = 0.5 * rn.norm_squared();
            if cn.is_finite() && cn < cost {
                let small_step = step.norm() <= 1e-10 * (x.norm() + 1e-10);
                let small_gain = cost - cn <= 1e-12 * cost;
                x = xn;
                res = rn;
                cost = cn;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                converged = small_step || small_gain;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // no downhill step at any damping: a stationary point to working precision
            converged = true;
            break;
        }
        jac = jacobian(&r, &x, &res);
        if converged {
            break;
        }
    }
    LmSolution { x, cost, jacobian: jac, residuals: res, converged, iterations }
}

/// Covariance of the fitted parameters from the residual variance and `(JᵀJ)⁻¹`.
fn covariance(sol: &LmSolution) -> DMatrix<f64> {
    let m = sol.residuals.len();
    let n = sol.x.len();
    let s2 = sol.residuals.norm_squared() / (m.saturating_sub(n)).max(1) as f64;
    let jtj = sol.jacobian.transpose() * &sol.jacobian;
    jtj.try_inverse().map(|inv| inv * s2).unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub alpha: f64,
    #[serde(rename = "sigma_hz")]
    pub sigma: f64,
    pub s_p: f64,
    #[serde(rename = "fwhm_hz")]
    pub fwhm: f64,
    /// Integral of the fitted peak over all frequencies.
    pub peak_power: f64,
    pub residual_norm: f64,
}

/// Central-peak form `s_p σ^{2α−1} / (f² + π²σ²)^α`.
pub fn peak_model(alpha: f64, sigma: f64, s_p: f64, f: f64) -> f64 {
    s_p * sigma.powf(2.0 * alpha - 1.0) / (f * f + (PI * sigma).powi(2)).powf(alpha)
}

pub fn peak_fwhm(alpha: f64, sigma: f64) -> f64 {
    2.0 * PI * sigma * (2f64.powf(1.0 / alpha) - 1.0).sqrt()
}

/// Integral of the peak form; `4 s_p / (3π⁴)` at `α = 5/2`.
pub fn peak_power(alpha: f64, s_p: f64) -> f64 {
    s_p * PI.powf(1.0 - 2.0 * alpha) * PI.sqrt() * (ln_gamma(alpha - 0.5) - ln_gamma(alpha)).exp()
}

fn log_peak_model(p: &DVector<f64>, f: f64) -> f64 {
    let alpha = 0.5 + p[0].exp();
    let ln_sigma = p[1];
    let sigma = ln_sigma.exp();
    p[2] + (2.0 * alpha - 1.0) * ln_sigma - alpha * (f * f + (PI * sigma).powi(2)).ln()
}

/// Fits the central peak within `|f| ≤ window` (Hz).
pub fn fit_peak(record: &SpectrumRecord, window: f64) -> Result<PeakFit, FitError> {
    if !(window > 0.0) {
        return Err(FitError::InvalidInput("window must be > 0".into()));
    }
    let (f, ly): (Vec<f64>, Vec<f64>) = record
        .frequencies
        .iter()
        .zip(&record.psd)
        .filter(|(f, p)| f.abs() <= window && **p > 0.0)
        .map(|(f, p)| (*f, p.ln()))
        .unzip();
    if f.len() < 5 {
        return Err(FitError::InvalidInput(format!("only {} positive samples inside the peak window", f.len())));
    }
    let max_iter = 300;
    let (imax, &lmax) = ly.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let half = lmax - 2f64.ln();
    let above: Vec<f64> = f.iter().zip(&ly).filter(|(_, l)| **l >= half).map(|(f, _)| f.abs()).collect();
    let half_width = above.iter().cloned().fold(0.0, f64::max).max(0.5 * (f[imax.min(f.len() - 2) + 1] - f[imax.min(f.len() - 2)]).abs());
    let residual = |p: &DVector<f64>| DVector::from_iterator(f.len(), f.iter().zip(&ly).map(|(fk, lk)| log_peak_model(p, *fk) - lk));
    let mut best: Option<LmSolution> = None;
    for alpha0 in [0.75, 1.0, 1.5, 2.5, 4.0] {
        let sigma0 = half_width / (PI * (2f64.powf(1.0 / alpha0) - 1.0).sqrt());
        // s_p from the peak height S(0) = s_p / (σ π^{2α})
        let ln_sp = lmax + sigma0.ln() + 2.0 * alpha0 * PI.ln();
        let x0 = DVector::from_vec(vec![(alpha0 - 0.5f64).ln(), sigma0.ln(), ln_sp]);
        let sol = levenberg_marquardt(residual, x0, max_iter);
        if sol.converged && best.as_ref().is_none_or(|b| sol.cost < b.cost) {
            best = Some(sol);
        }
    }
    let sol = best.ok_or(FitError::NonConvergence { iterations: max_iter })?;
    let alpha = 0.5 + sol.x[0].exp();
    let sigma = sol.x[1].exp();
    let s_p = sol.x[2].exp();
    // a flat trace is matched only by a runaway width
    if !(alpha.is_finite() && sigma.is_finite() && s_p.is_finite()) || alpha > 50.0 || sigma > 10.0 * window {
        return Err(FitError::NonConvergence { iterations: sol.iterations });
    }
    Ok(PeakFit {
        alpha,
        sigma,
        s_p,
        fwhm: peak_fwhm(alpha, sigma),
        peak_power: peak_power(alpha, s_p),
        residual_norm: (2.0 * sol.cost / f.len() as f64).sqrt(),
    })
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0])).sum()
}

/// Rescales the record so the fitted peak power plus the wing integral equals 1.
///
/// Wings are the samples with `|f| > window`; a one-sided record has its wing integral doubled.
pub fn normalize_record(record: &SpectrumRecord, peak: &PeakFit, window: f64) -> SpectrumRecord {
    let total = peak.peak_power * scale_of(record, peak, window);
    let mut out = record.clone();
    out.psd.iter_mut().for_each(|p| *p /= total);
    out.normalization_applied = true;
    out
}

fn scale_of(record: &SpectrumRecord, peak: &PeakFit, window: f64) -> f64 {
    let mut wing = 0.0;
    for side in [-1.0, 1.0] {
        let (x, y): (Vec<f64>, Vec<f64>) = record
            .frequencies
            .iter()
            .zip(&record.psd)
            .filter(|(f, _)| side * **f > window)
            .map(|(f, p)| (*f, *p))
            .unzip();
        wing += trapezoid(&x, &y);
    }
    if record.frequencies[0] > -window {
        wing *= 2.0;
    }
    1.0 + wing / peak.peak_power
}

/// Wing integral plus peak power of a record, in its own units.
pub fn total_power(record: &SpectrumRecord, peak: &PeakFit, window: f64) -> f64 {
    peak.peak_power * scale_of(record, peak, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedBump {
    #[serde(rename = "hg_hz2_per_hz")]
    pub hg: f64,
    #[serde(rename = "sigma_g_hz")]
    pub sigma_g: f64,
    #[serde(rename = "fg_hz")]
    pub fg: f64,
    /// Integrated phase power, recomputed from the three fitted parameters.
    pub s_g: f64,
}

/// Composite fit. Serializes as a composite `NoiseModel` with the fit details alongside, so the
/// JSON loads directly as a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NoiseFitRepr", try_from = "NoiseFitRepr")]
pub struct NoiseFit {
    pub h0: f64,
    pub bumps: Vec<FittedBump>,
    /// RMS of the log-psd residuals.
    pub residual_norm: f64,
    /// Covariance of `(h0, hg₁, σ₁, fg₁, …)`.
    pub covariance: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct NoiseFitRepr {
    kind: String,
    terms: Vec<NoiseModel>,
    #[serde(rename = "h0_hz2_per_hz")]
    h0: f64,
    bumps: Vec<FittedBump>,
    residual_norm: f64,
    covariance: Vec<Vec<f64>>,
    #[serde(default)]
    warnings: Vec<String>,
}

impl From<NoiseFit> for NoiseFitRepr {
    fn from(fit: NoiseFit) -> Self {
        let terms = match fit.to_model() {
            NoiseModel::Composite { terms } => terms,
            other => vec![other],
        };
        Self {
            kind: "composite".into(),
            terms,
            h0: fit.h0,
            bumps: fit.bumps,
            residual_norm: fit.residual_norm,
            covariance: fit.covariance,
            warnings: fit.warnings,
        }
    }
}

impl TryFrom<NoiseFitRepr> for NoiseFit {
    type Error = String;
    fn try_from(r: NoiseFitRepr) -> Result<Self, String> {
        if r.kind != "composite" {
            return Err(format!("expected kind \"composite\", got {:?}", r.kind));
        }
        Ok(Self { h0: r.h0, bumps: r.bumps, residual_norm: r.residual_norm, covariance: r.covariance, warnings: r.warnings })
    }
}

impl NoiseFit {
    pub fn to_model(&self) -> NoiseModel {
        let mut terms = vec![NoiseModel::White { h0: self.h0 }];
        terms.extend(self.bumps.iter().map(|b| NoiseModel::ServoBump { hg: b.hg, sigma_g: b.sigma_g, fg: b.fg }));
        NoiseModel::Composite { terms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFitOptions {
    /// Half-width of the excluded central-peak region.
    #[serde(rename = "peak_exclusion_hz")]
    pub peak_exclusion: f64,
    pub max_iterations: usize,
    /// Cap on the number of bump-centre initializations tried.
    pub max_starts: usize,
}

impl Default for NoiseFitOptions {
    fn default() -> Self {
        Self { peak_exclusion: 25e3, max_iterations: 400, max_starts: 40 }
    }
}

struct Wings {
    f: Vec<f64>,
    ly: Vec<f64>,
    y: Vec<f64>,
}

fn composite_log(p: &DVector<f64>, td: f64, f: f64) -> f64 {
    let h0 = p[0].exp();
    let n = (p.len() - 1) / 3;
    let bumps: Vec<(f64, f64, f64)> = (0..n).map(|b| (p[1 + 3 * b].exp(), p[2 + 3 * b].exp(), p[3 + 3 * b].exp())).collect();
    self_het_white_bumps(h0, &bumps, td, f).max(1e-300).ln()
}

/// White level from the median ratio of data to the unit-level white form.
fn white_floor(w: &Wings, td: f64) -> f64 {
    let mut h0 = {
        let mut v: Vec<f64> = w.f.iter().zip(&w.y).map(|(f, y)| y * f * f / 2.0).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    for _ in 0..4 {
        let mut v: Vec<f64> =
            w.f.iter().zip(&w.y).map(|(f, y)| y * h0 / crate::heterodyne::self_het_white(h0, td, *f).max(1e-300)).collect();
        v.sort_by(f64::total_cmp);
        h0 = v[v.len() / 2];
    }
    h0
}

/// Bump-centre candidates: local maxima of the descalloped excess over the white floor.
fn bump_candidates(w: &Wings, td: f64, h0: f64, count: usize) -> Vec<(f64, f64, f64)> {
    let n = w.f.len();
    let excess: Vec<Option<f64>> = w
        .f
        .iter()
        .zip(&w.y)
        .map(|(f, y)| {
            let scallop = (PI * f * td).sin().powi(2);
            (scallop > 0.25).then(|| (y - crate::heterodyne::self_het_white(h0, td, *f)) * f * f / (4.0 * scallop))
        })
        .collect();
    let step = (w.f[n - 1] - w.f[0]) / (n - 1) as f64;
    let half = ((0.5 / td / step).ceil() as usize).max(2);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(half), (i + half + 1).min(n));
            let vals: Vec<f64> = excess[lo..hi].iter().flatten().copied().collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect();
    let mut peaks: Vec<(usize, f64)> = (1..n - 1)
        .filter(|&i| smooth[i] > 0.0 && smooth[i] >= smooth[i - 1] && smooth[i] > smooth[i + 1])
        .map(|i| (i, smooth[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for (i, hg) in peaks {
        if out.len() >= count {
            break;
        }
        let fg = w.f[i];
        if out.iter().any(|c| (c.0 - fg).abs() < 2.0 * half as f64 * step) {
            continue;
        }
        let mut j = i;
        while j + 1 < n && smooth[j] > 0.5 * hg {
            j += 1;
        }
        let mut k = i;
        while k > 0 && smooth[k] > 0.5 * hg {
            k -= 1;
        }
        let sigma = ((w.f[j] - w.f[k]) / 2.355).clamp(2.0 * step, fg / 3.0);
        out.push((fg, hg.max(1e-300), sigma));
    }
    out
}

fn combinations(n: usize, k: usize, limit: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        if out.len() >= limit {
            return out;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Fits white noise plus `n_bumps` servo bumps to the wings of a normalized record.
pub fn fit_noise_model(record: &SpectrumRecord, n_bumps: usize, opts: &NoiseFitOptions) -> Result<NoiseFit, FitError> {
    let td = record.delay_td;
    let mut pts: Vec<(f64, f64)> = record
        .frequencies
        .iter()
        .zip(&record.psd)
        .filter(|(f, p)| f.abs() > opts.peak_exclusion && **p > 0.0)
        .map(|(f, p)| (f.abs(), *p))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_params = 1 + 3 * n_bumps;
    if pts.len() < 4 * n_params.max(5) {
        return Err(FitError::InvalidInput(format!("{} wing samples are too few for {n_params} parameters", pts.len())));
    }
    let wings = Wings { f: pts.iter().map(|p| p.0).collect(), ly: pts.iter().map(|p| p.1.ln()).collect(), y: pts.iter().map(|p| p.1).collect() };
    let h0 = white_floor(&wings, td);
    let residual = |p: &DVector<f64>| {
        DVector::from_iterator(wings.f.len(), wings.f.iter().zip(&wings.ly).map(|(f, l)| composite_log(p, td, *f) - l))
    };

    let f_lo = wings.f[0];
    let f_hi = wings.f[wings.f.len() - 1];
    let mut candidates = bump_candidates(&wings, td, h0, n_bumps + 3);
    let mut filler = 0;
    while candidates.len() < n_bumps {
        filler += 1;
        let fg = f_lo * (f_hi / f_lo).powf(filler as f64 / (n_bumps + 1) as f64);
        candidates.push((fg, h0, fg / 20.0));
    }
    let mut starts: Vec<DVector<f64>> = Vec::new();
    for combo in combinations(candidates.len(), n_bumps, opts.max_starts) {
        let mut x = vec![h0.ln()];
        for &c in &combo {
            let (fg, hg, sigma) = candidates[c];
            x.extend([hg.ln(), sigma.ln(), fg.ln()]);
        }
        starts.push(DVector::from_vec(x));
    }
    let mut best: Option<LmSolution> = None;
    let mut any_converged = false;
    for x0 in starts {
        let sol = levenberg_marquardt(residual, x0, opts.max_iterations);
        any_converged |= sol.converged;
        if sol.converged && best.as_ref().is_none_or(|b| sol.cost < b.cost) {
            best = Some(sol);
        }
    }
    if !any_converged {
        return Err(FitError::NonConvergence { iterations: opts.max_iterations });
    }
    let sol = best.unwrap();
    let cov_log = covariance(&sol);
    let values: Vec<f64> = sol.x.iter().map(|v| v.exp()).collect();

    let mut order: Vec<usize> = (0..n_bumps).collect();
    order.sort_by(|&a, &b| values[3 + 3 * a].total_cmp(&values[3 + 3 * b]));
    let mut perm = vec![0];
    for &b in &order {
        perm.extend([1 + 3 * b, 2 + 3 * b, 3 + 3 * b]);
    }
    let covariance: Vec<Vec<f64>> =
        perm.iter().map(|&i| perm.iter().map(|&j| values[i] * values[j] * cov_log[(i, j)]).collect()).collect();
    let bumps: Vec<FittedBump> = order
        .iter()
        .map(|&b| {
            let (hg, sigma_g, fg) = (values[1 + 3 * b], values[2 + 3 * b], values[3 + 3 * b]);
            FittedBump { hg, sigma_g, fg, s_g: servo_bump_power(hg, sigma_g, fg).s_g }
        })
        .collect();

    let mut warnings = Vec::new();
    if !record.normalization_applied {
        warnings.push("record is not normalized; amplitudes are in the record's own units".to_string());
    }
    for (i, a) in bumps.iter().enumerate() {
        for b in &bumps[i + 1..] {
            if (a.fg - b.fg).abs() < 2.0 * a.sigma_g.max(b.sigma_g) {
                warnings.push(format!("degenerate bumps: centres {:.6e} Hz and {:.6e} Hz lie within 2 sigma_g", a.fg, b.fg));
            }
        }
        if servo_bump_power(a.hg, a.sigma_g, a.fg).narrow_bump_violated {
            warnings.push(format!("bump at {:.6e} Hz is wider than fg/3; the narrow-bump form is unreliable", a.fg));
        }
    }
    Ok(NoiseFit {
        h0: values[0],
        bumps,
        residual_norm: (2.0 * sol.cost / wings.f.len() as f64).sqrt(),
        covariance,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpBudget {
    #[serde(rename = "fg_hz")]
    pub fg: f64,
    pub s_g: f64,
    pub error: f64,
    pub worst_case_error: f64,
    /// Set when `s_g` exceeds the white-noise comparison threshold.
    pub exceeds_threshold: bool,
}

/// Rabi-frequency interval in which a bump's gate error exceeds the white-noise error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiWindow {
    #[serde(rename = "fg_hz")]
    pub fg: f64,
    #[serde(rename = "avoid_lo_hz")]
    pub avoid_lo: f64,
    #[serde(rename = "avoid_hi_hz")]
    pub avoid_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    #[serde(rename = "omega0_rad_per_s")]
    pub omega0: f64,
    pub n: f64,
    pub white_error: f64,
    pub s_g_threshold: f64,
    pub bumps: Vec<BumpBudget>,
    pub total_error: f64,
    pub avoid_windows: Vec<RabiWindow>,
}

/// Gate-error budget of a fitted spectrum for a one-photon pulse of area `2πN`.
pub fn error_budget(fit: &NoiseFit, omega0: f64, n: f64) -> ErrorBudget {
    let av = Averaging::InitialX;
    let white_error = error_white_1p(fit.h0, n, omega0, av);
    let threshold = 4.0 * PI * fit.h0 / (n * omega0);
    let bumps: Vec<BumpBudget> = fit
        .bumps
        .iter()
        .map(|b| BumpBudget {
            fg: b.fg,
            s_g: b.s_g,
            error: error_servo_1p(b.s_g, b.fg, n, omega0, av),
            worst_case_error: b.s_g * (PI * n).powi(2) / 4.0,
            exceeds_threshold: b.s_g >= threshold,
        })
        .collect();
    let mut avoid_windows = Vec::new();
    for b in &fit.bumps {
        // scan Ω/2π over [fg/4, 4fg] on a log grid
        let grid: Vec<f64> = (0..=800).map(|k| b.fg * 4f64.powf(k as f64 / 400.0 - 1.0)).collect();
        let bad: Vec<bool> = grid
            .iter()
            .map(|&nu| {
                let w = 2.0 * PI * nu;
                error_servo_1p(b.s_g, b.fg, n, w, av) > error_white_1p(fit.h0, n, w, av)
            })
            .collect();
        let mut k = 0;
        while k < grid.len() {
            if bad[k] {
                let start = k;
                while k + 1 < grid.len() && bad[k + 1] {
                    k += 1;
                }
                avoid_windows.push(RabiWindow { fg: b.fg, avoid_lo: grid[start], avoid_hi: grid[k] });
            }
            k += 1;
        }
    }
    ErrorBudget {
        omega0,
        n,
        white_error,
        s_g_threshold: threshold,
        total_error: white_error + bumps.iter().map(|b| b.error).sum::<f64>(),
        bumps,
        avoid_windows,
    }
}
