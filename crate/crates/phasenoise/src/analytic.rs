//! Weak-noise gate errors in closed form and by quadrature, and operator fidelity measures.
//!
//! `N` is the gate length in Rabi periods, `t = 2πN/Ω`. `InitialX` starts in a laboratory basis
//! state; `StateAveraged` averages the three Bloch axes.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::dynamics::{ErrorEstimate, EstimateMethod};
use crate::quad::{self, QuadError, Tolerance};
use crate::spectra::{servo_bump_power, NoiseModel};
use crate::special::{ci, ci_minus_ln, si};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("operator is not unitary (deviation {deviation:e})")]
    NonUnitary { deviation: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    #[serde(alias = "InitialX")]
    InitialX,
    #[serde(alias = "StateAveraged")]
    StateAveraged,
}

fn is_half_odd(n: f64) -> bool {
    (2.0 * n).round() as i64 % 2 != 0
}

/// `(-1)^{2N}`
fn parity(n: f64) -> f64 {
    if is_half_odd(n) {
        -1.0
    } else {
        1.0
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Message when `πh0/Ω0` leaves the weak-noise regime.
pub fn weak_noise_warning(h0: f64, omega0: f64) -> Option<String> {
    let r = PI * h0 / omega0;
    (r > 0.01).then(|| format!("πh0/Ω0 = {r:.3e} exceeds 0.01; weak-noise formulas may be inaccurate"))
}

pub fn error_white_1p(h0: f64, n: f64, omega0: f64, averaging: Averaging) -> f64 {
    let e = PI.powi(3) * h0 * n / omega0;
    match averaging {
        Averaging::InitialX => e,
        Averaging::StateAveraged => 4.0 * e / 3.0,
    }
}

pub fn error_white_2p(h1: f64, h2: f64, n: f64, omega_tilde0: f64, averaging: Averaging) -> f64 {
    error_white_1p(h1 + h2, n, omega_tilde0, averaging)
}

/// Narrow servo-bump pair of integrated phase power `s_g` centred at `±fg`.
pub fn error_servo_1p(s_g: f64, fg: f64, n: f64, omega0: f64, averaging: Averaging) -> f64 {
    let x = 2.0 * PI * fg / omega0;
    let eps = x - 1.0;
    // [1 - (-1)^{2N} cos(2πNx)] / (1 - x²)² = π²N² sinc²(πNε) / (2+ε)², regular at resonance
    let ratio = (PI * n).powi(2) * sinc(PI * n * eps).powi(2) / (2.0 + eps).powi(2);
    match averaging {
        Averaging::InitialX => s_g * x * x * ratio,
        Averaging::StateAveraged => 2.0 * s_g * x * x * (1.0 + x * x) * ratio / 3.0,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn error_servo_2p(
    sg1: f64,
    fg1: f64,
    sg2: f64,
    fg2: f64,
    n: f64,
    omega_tilde0: f64,
    averaging: Averaging,
) -> f64 {
    error_servo_1p(sg1, fg1, n, omega_tilde0, averaging) + error_servo_1p(sg2, fg2, n, omega_tilde0, averaging)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLimitedError {
    pub value: f64,
    /// False for integer `N` with `fc ≲ 1.43 h0` (and `fc ≲ Ω0/2π`), where the leading-order
    /// expansion misses the quasistatic error.
    pub valid: bool,
}

pub fn error_bandlimited_1p(h0: f64, fc: f64, n: f64, omega0: f64, averaging: Averaging) -> BandLimitedError {
    let y = 2.0 * PI * fc / omega0;
    let eps = y - 1.0;
    let a = 2.0 * PI * n;
    // y[1 - (-1)^{2N} cos(2πNy)] / (1 - y²) with the numerator written as 2 sin²(πNε)
    let osc = if eps == 0.0 {
        0.0
    } else {
        -2.0 * y * (PI * n * eps).sin().powi(2) / (eps * (2.0 + eps))
    };
    let sis = -PI * n * si(a * (1.0 - y)) + PI * n * si(a * (1.0 + y));
    let value = match averaging {
        Averaging::InitialX => {
            // 2 artanh(y) + Ci(a(1-y)) for y above 1 keeps only real parts; the pair is combined
            // through Ci(z) - ln z so the logarithms cancel analytically at y = 1.
            let z = a * (1.0 - y).abs();
            let logs = (1.0 + y).ln() + a.ln() + ci_minus_ln(z);
            let bracket = 2.0 * osc + logs - ci(a * (1.0 + y)) + 2.0 * sis;
            PI * h0 / (2.0 * omega0) * bracket
        }
        Averaging::StateAveraged => 4.0 * PI * h0 / (3.0 * omega0) * (osc + sis),
    };
    let integer = !is_half_odd(n);
    let valid = !(integer && fc < 1.43 * h0 && fc < omega0 / (2.0 * PI));
    BandLimitedError { value, valid }
}

/// Quasistatic error for one laser `[(h0, fc)]` or two `[(h1, fc1), (h2, fc2)]`, with `omega`
/// the one- or two-photon Rabi rate.
pub fn error_quasistatic(lasers: &[(f64, f64)], n: f64, omega: f64, averaging: Averaging) -> f64 {
    let hf: f64 = lasers.iter().map(|(h, fc)| h * fc).sum();
    let half = is_half_odd(n);
    match (half, averaging) {
        (true, Averaging::InitialX) => 8.0 * PI * PI * hf / (omega * omega),
        (true, Averaging::StateAveraged) => 16.0 * PI * PI * hf / (3.0 * omega * omega),
        (false, Averaging::InitialX) => 48.0 * PI.powi(6) * hf * hf * n * n / omega.powi(4),
        (false, Averaging::StateAveraged) => 32.0 * PI.powi(6) * hf * hf * n * n / omega.powi(4),
    }
}

/// Message when the quasistatic assumption `fc ≪ Ω/2π` is doubtful.
pub fn quasistatic_warning(fc: f64, omega: f64) -> Option<String> {
    (fc > omega / (20.0 * PI)).then(|| format!("fc = {fc:e} Hz is not small compared with Ω/2π"))
}

/// Quasistatic intensity-noise error `(πN)² Σσ² / 4`, independent of the Rabi rate.
pub fn error_intensity(variances: &[f64], n: f64) -> f64 {
    (PI * n).powi(2) * variances.iter().sum::<f64>() / 4.0
}

/// A frequency-noise density for the general quadrature.
pub trait Psd {
    fn density(&self, f: f64) -> f64;
    /// Frequencies where the density has edges or narrow structure.
    fn breakpoints(&self) -> Vec<f64>;
    /// Frequency beyond which only the flat level [`Psd::tail_level`] remains.
    fn support(&self) -> f64;
    /// Constant density continuing to infinity.
    fn tail_level(&self) -> f64;
    /// Warning if the density may fail to be smooth near `f0`.
    fn smoothness_warning(&self, f0: f64) -> Option<String>;
}

impl Psd for NoiseModel {
    fn density(&self, f: f64) -> f64 {
        self.psd_delta_nu(f)
    }

    fn breakpoints(&self) -> Vec<f64> {
        NoiseModel::breakpoints(self)
    }

    fn support(&self) -> f64 {
        let mut fmax: f64 = 0.0;
        for leaf in self.leaves() {
            match *leaf {
                NoiseModel::BandLimitedWhite { fc, .. } => fmax = fmax.max(fc),
                NoiseModel::ServoBump { .. } => fmax = fmax.max(leaf.max_frequency().unwrap_or(0.0)),
                _ => {}
            }
        }
        fmax
    }

    fn tail_level(&self) -> f64 {
        self.leaves()
            .iter()
            .map(|l| match **l {
                NoiseModel::White { h0 } => h0,
                _ => 0.0,
            })
            .sum()
    }

    fn smoothness_warning(&self, f0: f64) -> Option<String> {
        self.leaves().iter().find_map(|l| match **l {
            NoiseModel::BandLimitedWhite { h0, fc } if h0 > 0.0 && (fc - f0).abs() < 1e-3 * f0 => {
                Some(format!("band edge fc = {fc:e} Hz lies at the Rabi frequency; principal value is ill-defined"))
            }
            _ => None,
        })
    }
}

/// Linearly interpolated measured density, zero outside the sampled range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPsd {
    pub freqs_hz: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedPsd {
    pub fn new(freqs_hz: Vec<f64>, values: Vec<f64>) -> Result<Self, AnalyticError> {
        if freqs_hz.len() != values.len() || freqs_hz.len() < 2 {
            return Err(AnalyticError::InvalidInput("tabulated density needs matching columns of length >= 2".into()));
        }
        if freqs_hz.windows(2).any(|w| w[1] <= w[0]) || freqs_hz[0] < 0.0 {
            return Err(AnalyticError::InvalidInput("frequencies must be nonnegative and strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(AnalyticError::InvalidInput("density values must be finite and >= 0".into()));
        }
        Ok(Self { freqs_hz, values })
    }
}

impl Psd for TabulatedPsd {
    fn density(&self, f: f64) -> f64 {
        let f = f.abs();
        let fs = &self.freqs_hz;
        if f < fs[0] || f > fs[fs.len() - 1] {
            return 0.0;
        }
        let i = fs.partition_point(|&x| x <= f).clamp(1, fs.len() - 1);
        let w = (f - fs[i - 1]) / (fs[i] - fs[i - 1]);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }

    fn breakpoints(&self) -> Vec<f64> {
        // every sample is a kink; cap the list for very long tables
        let step = (self.freqs_hz.len() / 2000).max(1);
        self.freqs_hz.iter().step_by(step).copied().collect()
    }

    fn support(&self) -> f64 {
        self.freqs_hz[self.freqs_hz.len() - 1]
    }

    fn tail_level(&self) -> f64 {
        0.0
    }

    fn smoothness_warning(&self, _f0: f64) -> Option<String> {
        Some("smoothness of a tabulated density at the Rabi frequency cannot be verified".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralError {
    pub value: f64,
    /// Analytic contribution of the flat density beyond the quadrature range.
    pub tail: f64,
    pub warnings: Vec<String>,
}

/// Integration geometry shared by the general-gate quadratures.
struct Geometry {
    omega: f64,
    t: f64,
    f0: f64,
    upper: f64,
}

impl Geometry {
    fn new(psd: &dyn Psd, omega: f64, t: f64) -> Result<Self, AnalyticError> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(AnalyticError::InvalidInput("omega0 must be > 0".into()));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(AnalyticError::InvalidInput("gate time must be > 0".into()));
        }
        let f0 = omega / (2.0 * PI);
        Ok(Self { omega, t, f0, upper: (100.0 * f0).max(psd.support() * (1.0 + 1e-12)) })
    }

    /// `∫_0^F S(f) K(f) df` over panels of width `1/t` split at the model breakpoints and `f0`.
    fn integrate<K: Fn(f64) -> f64>(&self, psd: &dyn Psd, kernel: K) -> Result<f64, AnalyticError> {
        let g = |f: f64| {
            let s = psd.density(f);
            if s == 0.0 {
                0.0
            } else {
                s * kernel(f)
            }
        };
        let mut pts = quad::panels(0.0, self.upper, 1.0 / self.t, 20_000);
        pts.extend(psd.breakpoints().into_iter().filter(|&p| p > 0.0 && p < self.upper));
        pts.push(self.f0);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let coarse = Tolerance { max_intervals: 200_000, ..Tolerance::new(0.0, 1e-4) };
        let scale = quad::integrate_with_breaks(|f| g(f).abs(), &pts, coarse)?.value;
        if scale == 0.0 {
            return Ok(0.0);
        }
        let tol = Tolerance { max_intervals: 200_000, ..Tolerance::new(1e-13 * scale, 1e-11) };
        Ok(quad::integrate_with_breaks(g, &pts, tol)?.value)
    }
}

/// `∫_F^∞ (f² − a)^{-1} df` and `∫_F^∞ (f² − a)^{-2} df` for `F² ≫ a`.
fn inverse_power_tails(upper: f64, a: f64) -> (f64, f64) {
    let r = a / (upper * upper);
    let (mut i1, mut i2) = (0.0, 0.0);
    let mut rk = 1.0;
    for k in 0..60 {
        let kf = k as f64;
        i1 += rk / ((2.0 * kf + 1.0) * upper);
        i2 += (kf + 1.0) * rk / ((2.0 * kf + 3.0) * upper.powi(3));
        rk *= r;
        if rk < 1e-18 {
            break;
        }
    }
    (i1, i2)
}

/// Leading asymptotic term of `∫_F^∞ g(f) cos(2πτf + φ) df`.
fn oscillatory_tail_cos(g_at_upper: f64, tau: f64, upper: f64, phase: f64) -> f64 {
    -g_at_upper * (2.0 * PI * tau * upper + phase).sin() / (2.0 * PI * tau)
}

/// `∫_0^t e^{iks} ds`
fn segment(k: f64, t: f64) -> Complex64 {
    Complex64::from_polar(t, 0.5 * k * t) * sinc(0.5 * k * t)
}

/// `|∫_0^t sin(Ωs) e^{iωs} ds|² + (ω → −ω)`: second-order loss of the Bloch component along
/// the ideal trajectory, per unit `π²S`.
fn kernel_along(omega: f64, t: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f;
    let j = (segment(w + omega, t) - segment(w - omega, t)) * 0.5;
    2.0 * j.norm_sqr()
}

/// `∫_0^t ds1 cos(Ωs1) ∫_0^{s1} ds2 sin(Ωs2) cos(ω(s1 − s2))`: drives the in-plane component
/// perpendicular to the ideal trajectory. Regular at `ω = Ω`.
fn kernel_perp(omega: f64, t: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f;
    let d = omega - w;
    let s = omega + w;
    let x = d * t;
    // (sin x − x)/x²
    let sxm = if x.abs() < 1e-3 { -x / 6.0 + x.powi(3) / 120.0 } else { (x.sin() - x) / (x * x) };
    let (s2, c2) = (2.0 * omega * t).sin_cos();
    (s * omega * t * t * sxm - 0.5 * omega * t * x * s2 * sinc(0.5 * x).powi(2) - omega * t * c2 * sinc(x) + 0.5 * s2)
        / (2.0 * s * s)
}

/// `∫_F^∞ kernel_along df`
fn tail_along(omega: f64, t: f64, upper: f64) -> f64 {
    let f0 = omega / (2.0 * PI);
    let w = 2.0 * PI * upper;
    let (k, q) = (w + omega, w - omega);
    let c = (omega * t).cos();
    let smooth = 1.0 / (2.0 * PI * k) + 1.0 / (2.0 * PI * q) - 2.0 * c * c * (f0 / upper).atanh() / (4.0 * PI * PI * f0);
    let gk = 2.0 * omega / (k * k * q);
    let gq = -2.0 * omega / (k * q * q);
    smooth + oscillatory_tail_cos(gk, t, upper, omega * t) + oscillatory_tail_cos(gq, t, upper, -omega * t)
}

/// `∫_F^∞ kernel_perp df`
fn tail_perp(omega: f64, t: f64, upper: f64) -> f64 {
    let f0 = omega / (2.0 * PI);
    let w = 2.0 * PI * upper;
    let (d, s) = (omega - w, omega + w);
    let smooth = 0.5 * (omega * t + 0.5 * (2.0 * omega * t).sin()) * (f0 / upper).atanh() / (4.0 * PI * PI * f0);
    let g1 = omega / (2.0 * d * d * s);
    let g2 = omega / (2.0 * d * s * s);
    smooth - oscillatory_tail_cos(g1, t, upper, -omega * t - 0.5 * PI)
        + oscillatory_tail_cos(g2, t, upper, omega * t - 0.5 * PI)
}

/// Second-order loss along the ideal trajectory and the perpendicular displacement, with tails.
fn bloch_shifts(psd: &dyn Psd, geo: &Geometry) -> Result<((f64, f64), (f64, f64)), AnalyticError> {
    let (omega, t) = (geo.omega, geo.t);
    let along = geo.integrate(psd, |f| kernel_along(omega, t, f))?;
    let perp = geo.integrate(psd, |f| kernel_perp(omega, t, f))?;
    let h = psd.tail_level();
    let (ta, tp) = if h > 0.0 {
        (h * tail_along(omega, t, geo.upper), h * tail_perp(omega, t, geo.upper))
    } else {
        (0.0, 0.0)
    };
    let pi2 = PI * PI;
    Ok(((pi2 * (along + ta), pi2 * ta), (8.0 * pi2 * (perp + tp), 8.0 * pi2 * tp)))
}

/// Bloch components `(x, y)` of the noise-averaged state after time `t`, starting on `+x` in
/// the phase-following frame and rotating towards `+y`.
pub fn rho_evolution_weak_noise(psd: &dyn Psd, omega0: f64, t: f64) -> Result<(f64, f64), AnalyticError> {
    let geo = Geometry::new(psd, omega0, t)?;
    let ((loss, _), (shift, _)) = bloch_shifts(psd, &geo)?;
    let (sn, cs) = (omega0 * t).sin_cos();
    let along = 1.0 - 2.0 * loss;
    Ok((0.5 * (along * cs + shift * sn), 0.5 * (along * sn - shift * cs)))
}

/// Gate error for an arbitrary duration `t_g` by quadrature over the whole density. At
/// `t_g = 2πN/Ω0` the gate-time integrands are used.
pub fn error_general(psd: &dyn Psd, omega0: f64, t_g: f64, averaging: Averaging) -> Result<GeneralError, AnalyticError> {
    let geo = Geometry::new(psd, omega0, t_g)?;
    let mut warnings: Vec<String> = psd.smoothness_warning(geo.f0).into_iter().collect();
    let h = psd.tail_level();
    let (ff, a) = (geo.upper, geo.f0 * geo.f0);
    let (i1, i2) = inverse_power_tails(ff, a);
    let p4 = 16.0 * PI.powi(4);
    let p2 = 4.0 * PI * PI;
    let twice_n = omega0 * t_g / PI;
    let at_gate = twice_n.round() >= 1.0 && (twice_n - twice_n.round()).abs() < 1e-9;
    let (omega, t) = (omega0, t_g);
    let (value, tail) = if at_gate {
        let n = twice_n.round() / 2.0;
        let c = parity(n);
        let t = 2.0 * PI * n / omega;
        let geo = Geometry { t, ..geo };
        let base = |f: f64| {
            let w = 2.0 * PI * f;
            let s = w + omega;
            t * t * sinc(0.5 * (w - omega) * t).powi(2) / (2.0 * s * s)
        };
        match averaging {
            Averaging::InitialX => {
                let i = geo.integrate(psd, |f| omega * omega * base(f))?;
                let g = omega * omega / (p4 * (ff * ff - a).powi(2));
                let tail = h * (omega * omega * i2 / p4 + c * oscillatory_tail_cos(g, t, ff, 0.0));
                (p2 * (i + tail), p2 * tail)
            }
            Averaging::StateAveraged => {
                let i = geo.integrate(psd, |f| (omega * omega + (2.0 * PI * f).powi(2)) * base(f))?;
                let g = (omega * omega + p2 * ff * ff) / (p4 * (ff * ff - a).powi(2));
                let tail = h * (i1 / p2 + 2.0 * omega * omega * i2 / p4 + c * oscillatory_tail_cos(g, t, ff, 0.0));
                let k = 8.0 * PI * PI / 3.0;
                (k * (i + tail), k * tail)
            }
        }
    } else {
        match averaging {
            Averaging::InitialX => {
                let ((loss, tail), _) = bloch_shifts(psd, &geo)?;
                (loss, tail)
            }
            Averaging::StateAveraged => {
                let kernel = |f: f64| {
                    let w = 2.0 * PI * f;
                    0.25 * t * t * (sinc(0.5 * (w - omega) * t).powi(2) + sinc(0.5 * (w + omega) * t).powi(2))
                };
                let i = geo.integrate(psd, kernel)?;
                let f0 = geo.f0;
                let (g1, g2) = (1.0 / (p2 * (ff - f0).powi(2)), 1.0 / (p2 * (ff + f0).powi(2)));
                let tail = h * 0.5
                    * ((1.0 / (ff - f0) + 1.0 / (ff + f0)) / p2
                        - oscillatory_tail_cos(g1, t, ff, -2.0 * PI * t * f0)
                        - oscillatory_tail_cos(g2, t, ff, 2.0 * PI * t * f0));
                let k = 8.0 * PI * PI / 3.0;
                (k * (i + tail), k * tail)
            }
        }
    };
    if value < 0.0 {
        warnings.push(format!("negative error estimate {value:e}; the density may violate the weak-noise assumptions"));
    }
    Ok(GeneralError { value, tail, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMeasure {
    /// `(n + |Tr U0†U|²) / (n(n+1))`
    Standard,
    /// `|Tr U0†U|² / n²`
    TraceOverlap,
}

fn unitarity_deviation(u: &Matrix2<Complex64>) -> f64 {
    (u.adjoint() * u - Matrix2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn fidelity_operator(
    u0: &Matrix2<Complex64>,
    u: &Matrix2<Complex64>,
    measure: FidelityMeasure,
) -> Result<f64, AnalyticError> {
    for m in [u0, u] {
        let dev = unitarity_deviation(m);
        if dev > 1e-10 {
            return Err(AnalyticError::NonUnitary { deviation: dev });
        }
    }
    let tr = (u0.adjoint() * u).trace().norm_sqr();
    Ok(match measure {
        FidelityMeasure::Standard => (2.0 + tr) / 6.0,
        FidelityMeasure::TraceOverlap => tr / 4.0,
    })
}

/// `exp(−iθσx/2)`
pub fn rotation_x(theta: f64) -> Matrix2<Complex64> {
    let (s, c) = (0.5 * theta).sin_cos();
    Matrix2::new(
        Complex64::new(c, 0.0),
        Complex64::new(0.0, -s),
        Complex64::new(0.0, -s),
        Complex64::new(c, 0.0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryDrive {
    OnePhoton {
        #[serde(rename = "omega0_rad_per_s")]
        omega0: f64,
    },
    TwoPhoton {
        #[serde(rename = "omega_tilde0_rad_per_s")]
        omega_tilde0: f64,
    },
}

impl QueryDrive {
    pub fn rabi(&self) -> f64 {
        match *self {
            Self::OnePhoton { omega0 } => omega0,
            Self::TwoPhoton { omega_tilde0 } => omega_tilde0,
        }
    }
}

/// Which error to evaluate: a gate multiple `n` routes to closed forms, a duration `t_g_s` to
/// quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorQuery {
    pub drive: QueryDrive,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(rename = "t_g_s", default, skip_serializing_if = "Option::is_none")]
    pub t_g: Option<f64>,
    #[serde(default)]
    pub averaging: Averaging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub estimate: ErrorEstimate,
    pub warnings: Vec<String>,
}

/// Evaluates `query` for the frequency noise of each laser (one entry for one-photon drives, two
/// for two-photon drives). Errors from different lasers and different model terms add.
pub fn evaluate(query: &ErrorQuery, lasers: &[NoiseModel]) -> Result<QueryResult, AnalyticError> {
    let omega = query.drive.rabi();
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(AnalyticError::InvalidInput("Rabi rate must be > 0".into()));
    }
    let expected = match query.drive {
        QueryDrive::OnePhoton { .. } => 1,
        QueryDrive::TwoPhoton { .. } => 2,
    };
    if lasers.len() != expected {
        return Err(AnalyticError::InvalidInput(format!("expected {expected} noise model(s), got {}", lasers.len())));
    }
    for m in lasers {
        m.validate().map_err(|e| AnalyticError::InvalidInput(e.to_string()))?;
    }
    let mut warnings = Vec::new();
    match (query.n, query.t_g) {
        (Some(n), None) => {
            let twice = 2.0 * n;
            if !(n > 0.0 && (twice - twice.round()).abs() < 1e-12) {
                return Err(AnalyticError::InvalidInput(format!("N must be a positive half-integer, got {n}")));
            }
            let mut total = 0.0;
            for m in lasers {
                for leaf in m.leaves() {
                    total += match *leaf {
                        NoiseModel::White { h0 } => {
                            warnings.extend(weak_noise_warning(h0, omega));
                            error_white_1p(h0, n, omega, query.averaging)
                        }
                        NoiseModel::ServoBump { hg, sigma_g, fg } => {
                            let p = servo_bump_power(hg, sigma_g, fg);
                            if p.narrow_bump_violated {
                                warnings.push(format!("servo bump at {fg:e} Hz is too broad for the narrow-bump formula"));
                            }
                            error_servo_1p(p.s_g, fg, n, omega, query.averaging)
                        }
                        NoiseModel::BandLimitedWhite { h0, fc } => {
                            let r = error_bandlimited_1p(h0, fc, n, omega, query.averaging);
                            if !r.valid {
                                warnings.push(format!(
                                    "fc = {fc:e} Hz is below 1.43 h0 for a full rotation; use the quasistatic form"
                                ));
                            }
                            r.value
                        }
                        NoiseModel::Composite { .. } => unreachable!("leaves are flattened"),
                    };
                }
            }
            Ok(QueryResult { estimate: ErrorEstimate::exact(total, EstimateMethod::Analytic), warnings })
        }
        (None, Some(t)) => {
            let mut total = 0.0;
            for m in lasers {
                let r = error_general(m, omega, t, query.averaging)?;
                warnings.extend(r.warnings);
                total += r.value;
            }
            Ok(QueryResult { estimate: ErrorEstimate::exact(total, EstimateMethod::Quadrature), warnings })
        }
        _ => Err(AnalyticError::InvalidInput("exactly one of n and t_g_s must be set".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OMEGA0: f64 = 2.0 * PI * 1e6;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn white_benchmark() {
        let e = error_white_1p(40.0, 0.5, OMEGA0, Averaging::InitialX);
        assert!((e - 9.87e-5).abs() < 1e-7);
        assert_eq!(error_white_1p(0.0, 0.5, OMEGA0, Averaging::InitialX), 0.0);
        let avg = error_white_1p(40.0, 0.5, OMEGA0, Averaging::StateAveraged);
        assert!((avg / e - 4.0 / 3.0).abs() < 1e-15);
        let two = error_white_2p(40.0, 40.0, 0.5, OMEGA0, Averaging::InitialX);
        assert!((two - 1.97e-4).abs() < 1e-6);
        assert_eq!(error_white_2p(40.0, 0.0, 0.5, OMEGA0, Averaging::InitialX), e);
        assert_eq!(
            error_white_2p(10.0, 30.0, 1.0, OMEGA0, Averaging::StateAveraged),
            error_white_2p(30.0, 10.0, 1.0, OMEGA0, Averaging::StateAveraged)
        );
    }

    // direct transcription of the delta-substituted bump error, valid away from resonance
    fn servo_direct(s_g: f64, fg: f64, n: f64, omega: f64, averaging: Averaging) -> f64 {
        let c = parity(n);
        let w2 = (2.0 * PI * fg).powi(2);
        let bracket = 1.0 - c * (4.0 * PI * PI * n * fg / omega).cos();
        match averaging {
            Averaging::InitialX => 2.0 * s_g * (PI * fg * omega).powi(2) * bracket / (omega * omega - w2).powi(2),
            Averaging::StateAveraged => {
                4.0 * PI * PI * s_g * fg * fg * (omega * omega + w2) * bracket / (3.0 * (omega * omega - w2).powi(2))
            }
        }
    }

    #[test]
    fn servo_matches_direct_form() {
        for &x in &[0.3, 0.9, 1.2, 1.7, 2.5] {
            for &n in &[0.5, 1.0, 1.5, 2.0] {
                for av in [Averaging::InitialX, Averaging::StateAveraged] {
                    let fg = x * OMEGA0 / (2.0 * PI);
                    let a = error_servo_1p(2e-4, fg, n, OMEGA0, av);
                    let b = servo_direct(2e-4, fg, n, OMEGA0, av);
                    assert!(rel(a, b) < 1e-10 || (a - b).abs() < 1e-18, "x={x} n={n}");
                }
            }
        }
    }

    #[test]
    fn servo_resonance() {
        let f_res = OMEGA0 / (2.0 * PI);
        let e = error_servo_1p(1.6e-4, f_res, 0.5, OMEGA0, Averaging::InitialX);
        assert!(rel(e, 1.6e-4 * PI * PI / 16.0) < 1e-14);
        assert!((e - 9.9e-5).abs() < 1e-6);
        let avg = error_servo_1p(1.0, f_res, 1.5, OMEGA0, Averaging::StateAveraged);
        assert!(rel(avg, (PI * 1.5).powi(2) / 3.0) < 1e-14);
        // approaching resonance from the direct form
        let near = servo_direct(1.6e-4, f_res * (1.0 + 1e-5), 0.5, OMEGA0, Averaging::InitialX);
        assert!(rel(near, e) < 1e-3);
        // full rotation at twice the Rabi frequency
        assert!(error_servo_1p(1e-3, 2.0 * f_res, 1.0, OMEGA0, Averaging::InitialX) < 1e-35);
        let two = error_servo_2p(1e-4, f_res, 1e-4, f_res, 0.5, OMEGA0, Averaging::InitialX);
        assert!(rel(two, 2e-4 * PI * PI / 16.0) < 1e-14);
        assert_eq!(
            error_servo_2p(1e-4, 3e5, 0.0, 7e5, 1.0, OMEGA0, Averaging::InitialX),
            error_servo_1p(1e-4, 3e5, 1.0, OMEGA0, Averaging::InitialX)
        );
    }

    /// `E` for band-limited white noise by direct quadrature of the gate-time integrand.
    fn bandlimited_quadrature(h0: f64, fc: f64, n: f64, omega: f64, averaging: Averaging) -> f64 {
        let m = NoiseModel::BandLimitedWhite { h0, fc };
        error_general(&m, omega, 2.0 * PI * n / omega, averaging).unwrap().value
    }

    #[test]
    fn bandlimited_closed_form_matches_quadrature() {
        for &y in &[0.05, 0.5, 0.999, 1.0, 1.001, 1.5, 3.0, 20.0] {
            for &n in &[0.5, 1.0, 1.5] {
                for av in [Averaging::InitialX, Averaging::StateAveraged] {
                    let fc = y * OMEGA0 / (2.0 * PI);
                    let a = error_bandlimited_1p(100.0, fc, n, OMEGA0, av).value;
                    let b = bandlimited_quadrature(100.0, fc, n, OMEGA0, av);
                    assert!(rel(a, b) < 1e-7, "y={y} n={n} {av:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn bandlimited_limits() {
        let f = OMEGA0 / (2.0 * PI);
        let wide = error_bandlimited_1p(50.0, 100.0 * f, 1.0, OMEGA0, Averaging::InitialX).value;
        assert!(rel(wide, error_white_1p(50.0, 1.0, OMEGA0, Averaging::InitialX)) < 0.01);
        let narrow = error_bandlimited_1p(50.0, 0.01 * f, 0.5, OMEGA0, Averaging::InitialX).value;
        assert!(rel(narrow, 8.0 * PI * PI * 50.0 * 0.01 * f / (OMEGA0 * OMEGA0)) < 0.02);
        assert_eq!(error_bandlimited_1p(0.0, f, 0.5, OMEGA0, Averaging::InitialX).value, 0.0);
        assert!(!error_bandlimited_1p(3180.0, 1000.0, 1.0, OMEGA0, Averaging::InitialX).valid);
        assert!(error_bandlimited_1p(3180.0, 1000.0, 0.5, OMEGA0, Averaging::InitialX).valid);
        assert!(error_bandlimited_1p(3180.0, 5000.0, 1.0, OMEGA0, Averaging::InitialX).valid);
        // continuous through y = 1
        let at = error_bandlimited_1p(50.0, f, 0.5, OMEGA0, Averaging::InitialX).value;
        let off = error_bandlimited_1p(50.0, f * (1.0 + 1e-9), 0.5, OMEGA0, Averaging::InitialX).value;
        assert!(rel(at, off) < 1e-7);
    }

    #[test]
    fn quasistatic_values() {
        let e = error_quasistatic(&[(3180.0, 100.0)], 0.5, OMEGA0, Averaging::InitialX);
        assert!(rel(e, 8.0 * PI * PI * 3.18e5 / OMEGA0.powi(2)) < 1e-14);
        assert!((e - 6.4e-7).abs() < 1e-8);
        let a = error_quasistatic(&[(100.0, 300.0)], 1.0, OMEGA0, Averaging::InitialX);
        let b = error_quasistatic(&[(200.0, 300.0)], 1.0, OMEGA0, Averaging::InitialX);
        assert!(rel(b, 4.0 * a) < 1e-14);
        let two = error_quasistatic(&[(100.0, 300.0), (50.0, 600.0)], 1.0, OMEGA0, Averaging::StateAveraged);
        assert!(rel(two, 4.0 * error_quasistatic(&[(100.0, 300.0)], 1.0, OMEGA0, Averaging::StateAveraged)) < 1e-14);
        // half-integer values agree with the small-bandwidth limit of the band-limited form
        let f = 1e-3 * OMEGA0 / (2.0 * PI);
        for av in [Averaging::InitialX, Averaging::StateAveraged] {
            let q = error_quasistatic(&[(10.0, f)], 0.5, OMEGA0, av);
            let bl = error_bandlimited_1p(10.0, f, 0.5, OMEGA0, av).value;
            assert!(rel(q, bl) < 1e-3, "{av:?}");
        }
        assert!(quasistatic_warning(2e5, OMEGA0).is_some());
        assert!(quasistatic_warning(1e3, OMEGA0).is_none());
    }

    #[test]
    fn intensity_values() {
        assert!((error_intensity(&[3.7e-6], 0.5) - 2.28e-6).abs() < 1e-8);
        assert!((error_intensity(&[8e-5, 8e-5], 0.5) - 9.9e-5).abs() < 1e-6);
        assert_eq!(error_intensity(&[0.0], 1.0), 0.0);
    }

    #[test]
    fn general_matches_white_closed_form() {
        let m = NoiseModel::White { h0: 40.0 };
        for &n in &[0.5, 1.0, 2.5] {
            for av in [Averaging::InitialX, Averaging::StateAveraged] {
                let g = error_general(&m, OMEGA0, 2.0 * PI * n / OMEGA0, av).unwrap();
                assert!(rel(g.value, error_white_1p(40.0, n, OMEGA0, av)) < 1e-6, "n={n} {av:?}");
            }
        }
    }

    #[test]
    fn general_matches_narrow_bump() {
        let fg = 0.8e6;
        let sigma = 0.01 * fg;
        let m = NoiseModel::ServoBump { hg: 1e3, sigma_g: sigma, fg };
        let s_g = servo_bump_power(1e3, sigma, fg).s_g;
        for &n in &[0.5, 1.0] {
            let g = error_general(&m, OMEGA0, 2.0 * PI * n / OMEGA0, Averaging::InitialX).unwrap().value;
            let c = error_servo_1p(s_g, fg, n, OMEGA0, Averaging::InitialX);
            assert!(rel(g, c) < 0.02, "n={n}: {g} vs {c}");
        }
    }

    /// `π² ∫_{-∞}^{∞} S(f) |∫_0^t sin(Ωs) e^{2πifs} ds|² df`: the InitialX error from the
    /// first-order rotation about the axis orthogonal to the initial state.
    fn initial_x_oracle(m: &NoiseModel, omega: f64, t: f64) -> f64 {
        let seg = |k: f64| {
            if k == 0.0 {
                Complex64::new(t, 0.0)
            } else {
                (Complex64::new(0.0, k * t).exp() - 1.0) / Complex64::new(0.0, k)
            }
        };
        let j2 = |f: f64| {
            let w = 2.0 * PI * f;
            ((seg(w + omega) - seg(w - omega)) / Complex64::new(0.0, 2.0)).norm_sqr()
        };
        let upper = 3000.0 * omega / (2.0 * PI);
        let mut pts = quad::panels(-upper, upper, 1.0 / t, 200_000);
        pts.push(omega / (2.0 * PI));
        pts.push(-omega / (2.0 * PI));
        pts.sort_by(f64::total_cmp);
        let tol = Tolerance { max_intervals: 400_000, ..Tolerance::new(1e-18, 1e-10) };
        PI * PI * quad::integrate_with_breaks(|f| m.psd_delta_nu(f) * j2(f), &pts, tol).unwrap().value
    }

    #[test]
    fn general_initial_x_matches_rotation_oracle() {
        let m = NoiseModel::Composite {
            terms: vec![
                NoiseModel::BandLimitedWhite { h0: 300.0, fc: 3e6 },
                NoiseModel::ServoBump { hg: 500.0, sigma_g: 5e4, fg: 1.3e6 },
            ],
        };
        for &t_rel in &[0.5, 1.0, 1.3, 0.77] {
            let t = 2.0 * PI * t_rel / OMEGA0;
            let g = error_general(&m, OMEGA0, t, Averaging::InitialX).unwrap().value;
            let o = initial_x_oracle(&m, OMEGA0, t);
            assert!(rel(g, o) < 1e-5, "t_rel={t_rel}: {g} vs {o}");
        }
    }

    #[test]
    fn general_continuous_off_gate() {
        let m = NoiseModel::White { h0: 100.0 };
        for av in [Averaging::InitialX, Averaging::StateAveraged] {
            let base = 1.3 * PI / OMEGA0;
            let vals: Vec<f64> = [-1e-4, 0.0, 1e-4]
                .iter()
                .map(|e| error_general(&m, OMEGA0, base * (1.0 + e), av).unwrap().value)
                .collect();
            assert!(vals.iter().all(|v| v.is_finite() && *v > 0.0));
            assert!(rel(vals[0], vals[1]) < 1e-3 && rel(vals[2], vals[1]) < 1e-3, "{av:?} {vals:?}");
            // gate-time routing agrees with the general integrals just beside it
            let gate = error_general(&m, OMEGA0, PI / OMEGA0, av).unwrap().value;
            let beside = error_general(&m, OMEGA0, PI / OMEGA0 * (1.0 + 1e-7), av).unwrap().value;
            assert!(rel(gate, beside) < 1e-5, "{av:?}: {gate} vs {beside}");
        }
    }

    /// Averaged Bloch vector for `δν = a cos(2πft + θ)` over 16 phases `θ`, by direct propagation
    /// of `H = (Ω/2)σx − πδν σz` from the σz eigenstate.
    fn tone_bloch(a: f64, f: f64, t: f64) -> (f64, f64) {
        let i = Complex64::new(0.0, 1.0);
        let cfg = crate::ode::IntegratorConfig::new(1e-12, 1e-14);
        let (mut x, mut y) = (0.0, 0.0);
        for k in 0..16 {
            let th = 2.0 * PI * k as f64 / 16.0;
            let rhs = |s: f64, c: &[Complex64; 2]| {
                let e = -PI * a * (2.0 * PI * f * s + th).cos();
                [-i * (0.5 * OMEGA0 * c[1] + e * c[0]), -i * (0.5 * OMEGA0 * c[0] - e * c[1])]
            };
            let c = crate::ode::integrate(rhs, 0.0, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], t, &cfg)
                .unwrap()
                .y;
            // ideal axis = σz expectation, direction of motion = −σy expectation
            x += c[0].norm_sqr() - c[1].norm_sqr();
            y -= 2.0 * (c[0].conj() * c[1]).im;
        }
        (x / 32.0, y / 32.0)
    }

    #[test]
    fn bloch_kernels_match_direct_propagation() {
        let a = 2e3;
        let t = 1.3 * 2.0 * PI / OMEGA0;
        let (sn, cs) = (OMEGA0 * t).sin_cos();
        for &f in &[5e5, 0.99e6, 1.3e6] {
            // a tone carries ∫_0^∞ S df = a²/4
            let loss = PI * PI * 0.25 * a * a * kernel_along(OMEGA0, t, f);
            let shift = 8.0 * PI * PI * 0.25 * a * a * kernel_perp(OMEGA0, t, f);
            let (x, y) = tone_bloch(a, f, t);
            let along = 1.0 - 2.0 * loss;
            let (px, py) = (0.5 * (along * cs + shift * sn), 0.5 * (along * sn - shift * cs));
            assert!((x - px).abs() < 1e-8 && (y - py).abs() < 1e-8, "f={f}: ({x}, {y}) vs ({px}, {py})");
            let err = 1.0 - (0.5 + x * cs + y * sn);
            assert!(rel(err, loss) < 1e-3, "f={f}: {err} vs {loss}");
        }
    }

    #[test]
    fn kernels_match_expanded_forms() {
        let t = 1.3 * PI / OMEGA0;
        for &f in &[1e5, 0.7e6, 0.95e6, 1.2e6, 5e6] {
            let w = 2.0 * PI * f;
            let (k, q) = (w + OMEGA0, w - OMEGA0);
            let along = (1.0 - (k * t).cos()) / (k * k) + (1.0 - (q * t).cos()) / (q * q)
                - (1.0 + (2.0 * OMEGA0 * t).cos() - (k * t).cos() - (q * t).cos()) / (k * q);
            let (d, s) = (OMEGA0 - w, OMEGA0 + w);
            let perp = (-d * s * (OMEGA0 * t + 0.5 * (2.0 * OMEGA0 * t).sin())
                + OMEGA0 * s * (d * t).sin()
                + OMEGA0 * d * (s * t).sin())
                / (2.0 * d * d * s * s);
            assert!(rel(kernel_along(OMEGA0, t, f), along) < 1e-8, "f={f}");
            assert!(rel(kernel_perp(OMEGA0, t, f), perp) < 1e-7, "f={f}");
        }
        let f0 = OMEGA0 / (2.0 * PI);
        for g in [kernel_along, kernel_perp] {
            let at = g(OMEGA0, t, f0);
            assert!(at.is_finite());
            assert!(rel(g(OMEGA0, t, f0 * (1.0 + 1e-9)), at) < 1e-6);
        }
    }

    #[test]
    fn tails_match_quadrature() {
        let f0 = OMEGA0 / (2.0 * PI);
        let tol = Tolerance { max_intervals: 400_000, ..Tolerance::new(1e-30, 1e-12) };
        for &t_rel in &[0.5, 1.3, 2.71] {
            let t = 2.0 * PI * t_rel / OMEGA0;
            let (lo, hi) = (100.0 * f0, 400.0 * f0);
            let pts = quad::panels(lo, hi, 1.0 / t, 100_000);
            for (kern, tail) in [
                (kernel_along as fn(f64, f64, f64) -> f64, tail_along as fn(f64, f64, f64) -> f64),
                (kernel_perp, tail_perp),
            ] {
                let q = quad::integrate_with_breaks(|f| kern(OMEGA0, t, f), &pts, tol).unwrap().value;
                let d = tail(OMEGA0, t, lo) - tail(OMEGA0, t, hi);
                assert!((q - d).abs() < 1e-3 * tail(OMEGA0, t, lo).abs().max(q.abs()), "t_rel={t_rel}: {q} vs {d}");
            }
        }
    }

    #[test]
    fn gate_integrand_finite_at_rabi_frequency() {
        // error at a gate time for a density concentrated right at Ω0/2π
        let f0 = OMEGA0 / (2.0 * PI);
        let m = NoiseModel::ServoBump { hg: 10.0, sigma_g: 1e3, fg: f0 };
        let e = error_general(&m, OMEGA0, PI / OMEGA0, Averaging::InitialX).unwrap().value;
        let s_g = servo_bump_power(10.0, 1e3, f0).s_g;
        assert!(e.is_finite());
        assert!(rel(e, s_g * PI * PI / 16.0) < 0.01);
    }

    #[test]
    fn rho_components() {
        let zero = NoiseModel::zero();
        let t = 0.37e-6;
        let (x, y) = rho_evolution_weak_noise(&zero, OMEGA0, t).unwrap();
        assert!((x - 0.5 * (OMEGA0 * t).cos()).abs() < 1e-15);
        assert!((y - 0.5 * (OMEGA0 * t).sin()).abs() < 1e-15);
        let m = NoiseModel::White { h0: 200.0 };
        for &n in &[0.5, 1.0] {
            let tg = 2.0 * PI * n / OMEGA0;
            let (x, _) = rho_evolution_weak_noise(&m, OMEGA0, tg).unwrap();
            let e = error_white_1p(200.0, n, OMEGA0, Averaging::InitialX);
            assert!(rel(parity(n) * x, 0.5 - e) < 1e-8);
        }
        let tg = 1.3 * PI / OMEGA0;
        let (x, y) = rho_evolution_weak_noise(&m, OMEGA0, tg).unwrap();
        let f = 0.5 + x * (OMEGA0 * tg).cos() + y * (OMEGA0 * tg).sin();
        let e = error_general(&m, OMEGA0, tg, Averaging::InitialX).unwrap().value;
        assert!(((1.0 - f) - e).abs() < 1e-10);
    }

    #[test]
    fn tabulated_density_warns_and_integrates() {
        let freqs: Vec<f64> = (0..=400).map(|k| k as f64 * 1e5).collect();
        let vals = vec![40.0; freqs.len()];
        let tab = TabulatedPsd::new(freqs, vals).unwrap();
        let g = error_general(&tab, OMEGA0, PI / OMEGA0, Averaging::InitialX).unwrap();
        assert!(!g.warnings.is_empty());
        let bl = error_bandlimited_1p(40.0, 4e7, 0.5, OMEGA0, Averaging::InitialX).value;
        assert!(rel(g.value, bl) < 1e-6);
    }

    #[test]
    fn fidelity_measures() {
        let u0 = rotation_x(PI / 2.0);
        assert!((fidelity_operator(&u0, &u0, FidelityMeasure::Standard).unwrap() - 1.0).abs() < 1e-15);
        assert!((fidelity_operator(&u0, &u0, FidelityMeasure::TraceOverlap).unwrap() - 1.0).abs() < 1e-15);
        for k in 0..=100 {
            let delta = PI * k as f64 / 100.0;
            let u = rotation_x(PI / 2.0 + delta);
            let f = fidelity_operator(&u0, &u, FidelityMeasure::Standard).unwrap();
            let fp = fidelity_operator(&u0, &u, FidelityMeasure::TraceOverlap).unwrap();
            let c2 = (delta / 2.0).cos().powi(2);
            assert!((f - (1.0 / 3.0 + 2.0 * c2 / 3.0)).abs() < 1e-12);
            assert!((fp - c2).abs() < 1e-12);
        }
        let bad = Matrix2::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(0.1, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        );
        assert!(matches!(fidelity_operator(&u0, &bad, FidelityMeasure::Standard), Err(AnalyticError::NonUnitary { .. })));
    }

    #[test]
    fn query_routing() {
        let q = ErrorQuery { drive: QueryDrive::OnePhoton { omega0: OMEGA0 }, n: Some(0.5), t_g: None, averaging: Averaging::InitialX };
        let r = evaluate(&q, &[NoiseModel::White { h0: 40.0 }]).unwrap();
        assert_eq!(r.estimate.method, EstimateMethod::Analytic);
        assert!((r.estimate.mean_error - 9.87e-5).abs() < 1e-7);
        let q2 = ErrorQuery { n: None, t_g: Some(1.3 * PI / OMEGA0), ..q };
        assert_eq!(evaluate(&q2, &[NoiseModel::White { h0: 40.0 }]).unwrap().estimate.method, EstimateMethod::Quadrature);
        let two = ErrorQuery { drive: QueryDrive::TwoPhoton { omega_tilde0: OMEGA0 }, ..q };
        assert!(evaluate(&two, &[NoiseModel::White { h0: 40.0 }]).is_err());
        let r2 = evaluate(&two, &[NoiseModel::White { h0: 40.0 }, NoiseModel::White { h0: 40.0 }]).unwrap();
        assert!(rel(r2.estimate.mean_error, 2.0 * r.estimate.mean_error) < 1e-15);
        let bad: Result<ErrorQuery, _> = serde_json::from_str(
            r#"{"drive":{"kind":"one_photon","omega0_rad_per_s":1.0},"n":0.5,"averaging":"sideways"}"#,
        );
        assert!(bad.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn white_monotone(h0 in 1.0..1e4f64, n2 in 1u32..8, w in 1e5..1e8f64) {
            let n = n2 as f64 / 2.0;
            let e = error_white_1p(h0, n, w, Averaging::InitialX);
            prop_assert!(error_white_1p(h0 * 1.01, n, w, Averaging::InitialX) > e);
            prop_assert!(error_white_1p(h0, n + 0.5, w, Averaging::InitialX) > e);
            prop_assert!(error_white_1p(h0, n, w * 1.01, Averaging::InitialX) < e);
        }

        #[test]
        fn closed_forms_nonnegative(s in 0.0..1e-2f64, x in 0.01..3.0f64, y in 0.01..30.0f64, n2 in 1u32..6) {
            let n = n2 as f64 / 2.0;
            let fg = x * OMEGA0 / (2.0 * PI);
            let fc = y * OMEGA0 / (2.0 * PI);
            for av in [Averaging::InitialX, Averaging::StateAveraged] {
                prop_assert!(error_servo_1p(s, fg, n, OMEGA0, av) >= 0.0);
                prop_assert!(error_bandlimited_1p(s * 1e4, fc, n, OMEGA0, av).value >= -1e-18);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn general_nonnegative_at_gates(h in 0.0..1e3f64, hg in 0.0..1e3f64, x in 0.2..2.5f64, n2 in 1u32..4) {
            let m = NoiseModel::Composite { terms: vec![
                NoiseModel::White { h0: h },
                NoiseModel::ServoBump { hg, sigma_g: 2e4, fg: x * 1e6 },
            ]};
            let n = n2 as f64 / 2.0;
            for av in [Averaging::InitialX, Averaging::StateAveraged] {
                prop_assert!(error_general(&m, OMEGA0, 2.0 * PI * n / OMEGA0, av).unwrap().value >= 0.0);
            }
        }
    }
}
