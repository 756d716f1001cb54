//! Random time series of phase, frequency and relative-intensity noise by truncated Fourier
//! synthesis with deterministic amplitudes `2√(S Δf)` and uniform random phases.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::spectra::{NoiseModel, SpectraError};

/// Name recorded in every trace: the generator plus the per-trial seed mixer.
pub const RNG_ALGORITHM: &str = "chacha8+splitmix64";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub num_samples: usize,
    #[serde(rename = "bandwidth_hz")]
    pub bandwidth: f64,
    pub base_seed: u64,
}

impl SynthesisConfig {
    /// Derives the sample count from `duration` and `bandwidth`, rounding up to an even number;
    /// the stored bandwidth is then `(M/2)/T` exactly.
    pub fn new(duration: f64, bandwidth: f64, base_seed: u64) -> Result<Self, SynthError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(SynthError::InvalidConfig("duration must be > 0".into()));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(SynthError::InvalidConfig("bandwidth must be > 0".into()));
        }
        let half = (bandwidth * duration - 1e-9).ceil().max(1.0) as usize;
        Self::from_samples(duration, 2 * half, base_seed)
    }

    pub fn from_samples(duration: f64, num_samples: usize, base_seed: u64) -> Result<Self, SynthError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(SynthError::InvalidConfig("duration must be > 0".into()));
        }
        if num_samples < 2 || num_samples % 2 != 0 {
            return Err(SynthError::InvalidConfig("num_samples must be even and >= 2".into()));
        }
        let cfg = Self {
            duration,
            num_samples,
            bandwidth: (num_samples / 2) as f64 / duration,
            base_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 10³ samples over a 10 MHz band.
    pub fn standard(base_seed: u64) -> Self {
        Self::from_samples(1e3 / (2.0 * 10e6), 1000, base_seed).expect("standard config is valid")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.num_samples < 2 || self.num_samples % 2 != 0 {
            return Err(SynthError::InvalidConfig("num_samples must be even and >= 2".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SynthError::InvalidConfig("duration must be > 0".into()));
        }
        if self.num_modes() < 2 {
            return Err(SynthError::InvalidConfig("bandwidth must exceed the frequency step".into()));
        }
        let expected = self.num_modes() as f64 * self.df();
        if (self.bandwidth - expected).abs() > 1e-9 * expected {
            return Err(SynthError::InvalidConfig("bandwidth must equal (M/2)/T".into()));
        }
        Ok(())
    }

    pub fn df(&self) -> f64 {
        1.0 / self.duration
    }

    pub fn num_modes(&self) -> usize {
        self.num_samples / 2
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.duration / self.num_samples as f64;
        (0..self.num_samples).map(|k| k as f64 * dt).collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` derived from `base`: `splitmix64(base + index·φ64)` where `φ64` is the
/// 64-bit golden-ratio increment.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Uniform phases on `[0, 2π)` for modes `j = 1..=n`, in order.
pub fn random_phases(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>() * 2.0 * PI).collect()
}

/// Anything that can be evaluated at an arbitrary time.
pub trait Signal: Sync {
    fn value(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> Signal for F {
    fn value(&self, t: f64) -> f64 {
        self(t)
    }
}

/// `Re Σ_j c_j e^{2πi j Δf t}` over a contiguous harmonic range `j = first..first+len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub df: f64,
    pub first: usize,
    pub coeffs: Vec<Complex64>,
}

impl FourierSeries {
    fn from_modes(df: f64, mut coeffs: Vec<Complex64>) -> Self {
        // Modes below double precision relative to the largest add nothing; drop them from both ends.
        let peak = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let cut = peak * 1e-17;
        let last = coeffs.iter().rposition(|c| c.norm() > cut);
        let Some(last) = last else {
            return Self { df, first: 1, coeffs: Vec::new() };
        };
        coeffs.truncate(last + 1);
        let lead = coeffs.iter().position(|c| c.norm() > cut).unwrap_or(0);
        Self {
            df,
            first: 1 + lead,
            coeffs: coeffs.split_off(lead),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `Σ |c_j|`, an upper bound on `|value(t)|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn max_frequency(&self) -> f64 {
        (self.first + self.coeffs.len()).saturating_sub(1) as f64 * self.df
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        let theta = 2.0 * PI * self.df * t;
        let w = Complex64::from_polar(1.0, theta);
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * w + c;
        }
        (acc * Complex64::from_polar(1.0, theta * self.first as f64)).re
    }

    /// Values on the grid `t_k = k T / M`, `k = 0..M`, by one inverse FFT.
    pub fn sample_grid(&self, num_samples: usize) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); num_samples];
        for (k, c) in self.coeffs.iter().enumerate() {
            buf[(self.first + k) % num_samples] += c;
        }
        FftPlanner::new().plan_fft_inverse(num_samples).process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Piecewise Chebyshev surrogate on `[t0, t1]` that matches `eval` to near machine precision.
    pub fn sampler(&self, t0: f64, t1: f64) -> ChebyshevSampler<'_> {
        ChebyshevSampler::build(self, t0, t1)
    }
}

impl Signal for FourierSeries {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

const CHEB_NODES: usize = 16;

/// Chebyshev interpolant on equal segments, built from exact series values at Chebyshev nodes and
/// checked against the series between nodes. Queries outside the span fall back to the series.
#[derive(Debug, Clone)]
pub struct ChebyshevSampler<'a> {
    series: &'a FourierSeries,
    t0: f64,
    seg_len: f64,
    coeffs: Vec<[f64; CHEB_NODES]>,
}

impl<'a> ChebyshevSampler<'a> {
    fn build(series: &'a FourierSeries, t0: f64, t1: f64) -> Self {
        let span = (t1 - t0).max(0.0);
        let fmax = series.max_frequency().max(series.df);
        let mut seg_len = (0.25 / fmax).min(span).max(span / 1e6);
        if span == 0.0 || series.is_zero() {
            return Self { series, t0, seg_len: 1.0, coeffs: Vec::new() };
        }
        let tol = 1e-13 * series.amplitude_bound().max(f64::MIN_POSITIVE);
        loop {
            let nseg = (span / seg_len).ceil() as usize;
            let seg = span / nseg as f64;
            let coeffs: Vec<_> = (0..nseg).map(|s| Self::fit(series, t0 + s as f64 * seg, seg)).collect();
            let sampler = Self { series, t0, seg_len: seg, coeffs };
            if sampler.max_check_error() <= tol || seg_len < span / 1e6 {
                return sampler;
            }
            seg_len = seg / 2.0;
        }
    }

    fn fit(series: &FourierSeries, a: f64, len: f64) -> [f64; CHEB_NODES] {
        let n = CHEB_NODES as f64;
        let vals: Vec<f64> = (0..CHEB_NODES)
            .map(|k| {
                let x = (PI * (k as f64 + 0.5) / n).cos();
                series.eval(a + 0.5 * len * (x + 1.0))
            })
            .collect();
        let mut c = [0.0; CHEB_NODES];
        for (j, cj) in c.iter_mut().enumerate() {
            let s: f64 = vals
                .iter()
                .enumerate()
                .map(|(k, v)| v * (PI * j as f64 * (k as f64 + 0.5) / n).cos())
                .sum();
            *cj = 2.0 * s / n;
        }
        c
    }

    fn max_check_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..self.coeffs.len() {
            for frac in [0.013, 0.37, 0.5, 0.71, 0.987] {
                let t = self.t0 + (s as f64 + frac) * self.seg_len;
                worst = worst.max((self.value(t) - self.series.eval(t)).abs());
            }
        }
        worst
    }
}

impl Signal for ChebyshevSampler<'_> {
    fn value(&self, t: f64) -> f64 {
        if self.coeffs.is_empty() {
            return self.series.eval(t);
        }
        let u = (t - self.t0) / self.seg_len;
        let idx = u.floor();
        let last = self.coeffs.len() - 1;
        let s = if idx < 0.0 {
            if u < -1e-9 {
                return self.series.eval(t);
            }
            0
        } else if idx as usize > last {
            if u > self.coeffs.len() as f64 + 1e-9 {
                return self.series.eval(t);
            }
            last
        } else {
            idx as usize
        };
        let x = 2.0 * (u - s as f64) - 1.0;
        let c = &self.coeffs[s];
        // Clenshaw recurrence
        let (mut b1, mut b2) = (0.0, 0.0);
        for &cj in c.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + cj;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + 0.5 * c[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// radians
    Phase,
    /// Hz
    FrequencyDeviation,
    /// dimensionless
    RelativeIntensity,
}

fn mode_psds(model: &NoiseModel, cfg: &SynthesisConfig) -> Result<Vec<f64>, SynthError> {
    model.validate()?;
    cfg.validate()?;
    let df = cfg.df();
    Ok((1..=cfg.num_modes()).map(|j| model.psd_delta_nu(j as f64 * df)).collect())
}

/// `φ(t) = Σ_j 2√(S_φ(f_j)Δf) cos(2π f_j t + φ_j)`.
pub fn phase_series(model: &NoiseModel, cfg: &SynthesisConfig, seed: u64) -> Result<FourierSeries, SynthError> {
    let df = cfg.df();
    let psd = mode_psds(model, cfg)?;
    let phases = random_phases(seed, psd.len());
    let coeffs = psd
        .iter()
        .zip(&phases)
        .enumerate()
        .map(|(i, (&s, &p))| {
            let f = (i + 1) as f64 * df;
            Complex64::from_polar(2.0 * (s / (f * f) * df).sqrt(), p)
        })
        .collect();
    Ok(FourierSeries::from_modes(df, coeffs))
}

/// `δν(t) = Σ_j δν_j sin(2π f_j t + φ_j)`, `δν_j = -2√(S_δν(f_j)Δf)`, sharing the phase stream of
/// [`phase_series`] for the same seed so that `δν = φ'/2π` term by term.
pub fn frequency_series(model: &NoiseModel, cfg: &SynthesisConfig, seed: u64) -> Result<FourierSeries, SynthError> {
    let df = cfg.df();
    let psd = mode_psds(model, cfg)?;
    let phases = random_phases(seed, psd.len());
    let coeffs = psd
        .iter()
        .zip(&phases)
        .map(|(&s, &p)| {
            // a sin(θ) = Re(-i a e^{iθ})
            let a = -2.0 * (s * df).sqrt();
            Complex64::new(0.0, -a) * Complex64::from_polar(1.0, p)
        })
        .collect();
    Ok(FourierSeries::from_modes(df, coeffs))
}

/// `α_I(t) = Σ_j 2√(S_α(f_j)Δf) cos(2π f_j t + φ_j)`, with `model` read as the intensity-noise
/// density in 1/Hz.
pub fn intensity_series(model: &NoiseModel, cfg: &SynthesisConfig, seed: u64) -> Result<FourierSeries, SynthError> {
    let df = cfg.df();
    let psd = mode_psds(model, cfg)?;
    let phases = random_phases(seed, psd.len());
    let coeffs = psd
        .iter()
        .zip(&phases)
        .map(|(&s, &p)| Complex64::from_polar(2.0 * (s * df).sqrt(), p))
        .collect();
    Ok(FourierSeries::from_modes(df, coeffs))
}

/// A sampled realization together with everything needed to regenerate it. The underlying series
/// is kept so the trace can be evaluated between grid points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseTrace {
    pub kind: TraceKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub model: NoiseModel,
    pub seed: u64,
    pub rng: String,
    pub config: SynthesisConfig,
    #[serde(skip)]
    pub series: FourierSeries,
}

impl NoiseTrace {
    /// Recreates the trace from its recorded model, kind and config.
    pub fn regenerate(&self) -> Result<Self, SynthError> {
        build_trace(self.kind, &self.model, &self.config)
    }
}

impl Signal for NoiseTrace {
    fn value(&self, t: f64) -> f64 {
        self.series.eval(t)
    }
}

impl Default for FourierSeries {
    fn default() -> Self {
        Self { df: 1.0, first: 1, coeffs: Vec::new() }
    }
}

fn build_trace(kind: TraceKind, model: &NoiseModel, cfg: &SynthesisConfig) -> Result<NoiseTrace, SynthError> {
    let seed = cfg.base_seed;
    let series = match kind {
        TraceKind::Phase => phase_series(model, cfg, seed)?,
        TraceKind::FrequencyDeviation => frequency_series(model, cfg, seed)?,
        TraceKind::RelativeIntensity => intensity_series(model, cfg, seed)?,
    };
    Ok(NoiseTrace {
        kind,
        times: cfg.times(),
        values: series.sample_grid(cfg.num_samples),
        model: model.clone(),
        seed,
        rng: RNG_ALGORITHM.to_string(),
        config: *cfg,
        series,
    })
}

pub fn synth_phase_trace(model: &NoiseModel, cfg: &SynthesisConfig) -> Result<NoiseTrace, SynthError> {
    build_trace(TraceKind::Phase, model, cfg)
}

pub fn synth_frequency_trace(model: &NoiseModel, cfg: &SynthesisConfig) -> Result<NoiseTrace, SynthError> {
    build_trace(TraceKind::FrequencyDeviation, model, cfg)
}

pub fn synth_intensity_trace(model: &NoiseModel, cfg: &SynthesisConfig) -> Result<NoiseTrace, SynthError> {
    build_trace(TraceKind::RelativeIntensity, model, cfg)
}
