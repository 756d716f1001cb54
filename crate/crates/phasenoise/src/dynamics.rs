//! Monte-Carlo Schrödinger simulation of square-pulse Rabi gates driven by noisy lasers.
//!
//! Each trial synthesizes independent noise series, propagates the laboratory-frame amplitudes and
//! compares the result, moved into the frame that follows the laser phase, with a noiseless
//! propagation of the same drive. The per-trial infidelity averages to `1 - Tr[<ρ> ρ_ideal]`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use thiserror::Error;

pub use crate::ode::IntegratorConfig;
use crate::ode::{self, OdeError};
use crate::spectra::NoiseModel;
use crate::synth::{frequency_series, intensity_series, mix_seed, phase_series, FourierSeries, Signal, SynthError, SynthesisConfig};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("n_trials must be at least 2, got {0}")]
    TooFewTrials(usize),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Integrator(#[from] OdeError),
    #[error("state norm drifted by {deviation:e}, limit {limit:e}")]
    NormDrift { deviation: f64, limit: f64 },
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<DynamicsError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnePhotonDrive {
    #[serde(rename = "omega0_rad_per_s")]
    pub omega0: f64,
}

/// Ladder `g → e → r` with both lasers detuned from `e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderDrive {
    #[serde(rename = "omega1_rad_per_s")]
    pub omega1: f64,
    #[serde(rename = "omega2_rad_per_s")]
    pub omega2: f64,
    #[serde(rename = "delta1_rad_per_s")]
    pub delta1: f64,
    #[serde(rename = "delta2_rad_per_s")]
    pub delta2: f64,
}

impl LadderDrive {
    /// Picks `Δ2` so that the Stark-shifted two-photon transition is resonant.
    pub fn resonant(omega1: f64, omega2: f64, delta1: f64) -> Result<Self, DynamicsError> {
        let total = resonant_total_detuning(omega1, omega2, delta1)?;
        let d = Self { omega1, omega2, delta1, delta2: total - delta1 };
        d.validate()?;
        Ok(d)
    }

    /// Ω1 = Ω2 = 2π·100 MHz, Δ1 = −Δ2 = 2π·5 GHz.
    pub fn standard() -> Self {
        Self::resonant(2.0 * PI * 100e6, 2.0 * PI * 100e6, 2.0 * PI * 5e9).expect("standard ladder is valid")
    }

    /// `δ = Δ1 − Δ2`.
    pub fn intermediate_detuning(&self) -> f64 {
        self.delta1 - self.delta2
    }

    /// `Δ = Δ1 + Δ2`.
    pub fn total_detuning(&self) -> f64 {
        self.delta1 + self.delta2
    }

    pub fn effective_rabi(&self) -> f64 {
        (self.omega1 * self.omega2 / self.intermediate_detuning()).abs()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all = [self.omega1, self.omega2, self.delta1, self.delta2];
        if all.iter().any(|v| !v.is_finite()) || self.omega1 <= 0.0 || self.omega2 <= 0.0 {
            return Err(DynamicsError::InvalidDrive("ladder Rabi rates must be finite and > 0".into()));
        }
        let delta = self.intermediate_detuning();
        if delta == 0.0 {
            return Err(DynamicsError::InvalidDrive("intermediate detuning δ = Δ1 − Δ2 is zero".into()));
        }
        let eff = self.effective_rabi();
        if delta.abs() < 10.0 * eff {
            return Err(DynamicsError::InvalidDrive(format!(
                "|δ| = {:e} must be at least 10·Ω̃0 = {:e}",
                delta.abs(),
                10.0 * eff
            )));
        }
        let res = resonant_total_detuning(self.omega1, self.omega2, self.delta1)?;
        if (self.total_detuning() - res).abs() > 1e-6 * eff {
            return Err(DynamicsError::InvalidDrive(format!(
                "Δ1 + Δ2 = {:e} is off the Stark-shifted resonance {:e}",
                self.total_detuning(),
                res
            )));
        }
        Ok(())
    }
}

fn resonant_total_detuning(omega1: f64, omega2: f64, delta1: f64) -> Result<f64, DynamicsError> {
    if delta1 == 0.0 {
        return Err(DynamicsError::InvalidDrive("Δ1 must be nonzero".into()));
    }
    let arg = 1.0 + (omega1 * omega1 - omega2 * omega2) / (2.0 * delta1 * delta1);
    if arg < 0.0 {
        return Err(DynamicsError::InvalidDrive("no resonant detuning exists for these Rabi rates".into()));
    }
    // 1 - sqrt(1 + u) without cancellation for small u
    let u = arg - 1.0;
    Ok(delta1 * (-u / (1.0 + arg.sqrt())))
}

/// Λ system `g ↔ p ↔ e` with the sidebands detuned by `Δ` from `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaDrive {
    #[serde(rename = "omega1_rad_per_s")]
    pub omega1: Complex64,
    #[serde(rename = "omega2_rad_per_s")]
    pub omega2: Complex64,
    #[serde(rename = "delta_rad_per_s")]
    pub delta: f64,
    /// Both sidebands carry the same phase trace.
    pub correlated_phase: bool,
}

impl LambdaDrive {
    /// `|Ω1| = |Ω2| = 2π·100 MHz`, `Δ = 2π·5 GHz`, real couplings.
    pub fn standard(correlated_phase: bool) -> Self {
        let w = Complex64::new(2.0 * PI * 100e6, 0.0);
        Self { omega1: w, omega2: w, delta: 2.0 * PI * 5e9, correlated_phase }
    }

    /// `|Ω1 Ω2*| / 2Δ`.
    pub fn effective_rabi(&self) -> f64 {
        (self.omega1 * self.omega2.conj()).norm() / (2.0 * self.delta.abs())
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.delta.is_finite() && self.delta != 0.0) {
            return Err(DynamicsError::InvalidDrive("Λ detuning must be finite and nonzero".into()));
        }
        if self.omega1.norm() == 0.0 || self.omega2.norm() == 0.0 || !self.omega1.norm().is_finite() || !self.omega2.norm().is_finite() {
            return Err(DynamicsError::InvalidDrive("Λ Rabi rates must be finite and nonzero".into()));
        }
        if self.delta.abs() < 10.0 * self.effective_rabi() {
            return Err(DynamicsError::InvalidDrive("|Δ| must be at least 10·Ω̃".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveConfig {
    OnePhoton(OnePhotonDrive),
    TwoPhotonLadder(LadderDrive),
    Lambda(LambdaDrive),
}

impl DriveConfig {
    pub fn one_photon(omega0: f64) -> Self {
        Self::OnePhoton(OnePhotonDrive { omega0 })
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            Self::OnePhoton(d) => {
                if !(d.omega0 > 0.0 && d.omega0.is_finite()) {
                    return Err(DynamicsError::InvalidDrive("omega0 must be > 0".into()));
                }
                Ok(())
            }
            Self::TwoPhotonLadder(d) => d.validate(),
            Self::Lambda(d) => d.validate(),
        }
    }

    /// Rabi rate of the qubit transition, effective rate for the two-photon schemes.
    pub fn effective_rabi(&self) -> f64 {
        match self {
            Self::OnePhoton(d) => d.omega0,
            Self::TwoPhotonLadder(d) => d.effective_rabi(),
            Self::Lambda(d) => d.effective_rabi(),
        }
    }

    fn levels(&self) -> usize {
        match self {
            Self::OnePhoton(_) => 2,
            _ => 3,
        }
    }

    /// Indices of the two qubit levels in the state vector.
    fn qubit_levels(&self) -> (usize, usize) {
        match self {
            Self::OnePhoton(_) => (0, 1),
            _ => (0, 2),
        }
    }

    /// Integrator settings used when the caller does not supply any.
    pub fn default_integrator(&self) -> IntegratorConfig {
        match self {
            Self::OnePhoton(_) => IntegratorConfig::new(1e-10, 1e-10),
            Self::TwoPhotonLadder(d) => IntegratorConfig::new(1e-9, 1e-9).with_max_step(1.0 / (20.0 * d.delta1.abs())),
            Self::Lambda(d) => IntegratorConfig::new(1e-9, 1e-9).with_max_step(1.0 / (20.0 * d.delta.abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InitialState {
    #[default]
    #[serde(alias = "x_plus")]
    XPlus,
    #[serde(alias = "y_plus")]
    YPlus,
    #[serde(alias = "z_plus")]
    ZPlus,
}

impl InitialState {
    pub const ALL: [InitialState; 3] = [Self::XPlus, Self::YPlus, Self::ZPlus];

    /// Qubit amplitudes in the phase-following frame; `XPlus` is the laboratory ground state.
    pub fn amplitudes(self) -> [Complex64; 2] {
        let h = FRAC_1_SQRT_2;
        match self {
            Self::XPlus => [ONE, ZERO],
            Self::YPlus => [Complex64::new(h, 0.0), Complex64::new(0.0, h)],
            Self::ZPlus => [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
        }
    }
}

/// Gate length as a multiple `N` of the Rabi period or as an explicit duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(rename = "t_g_s", default, skip_serializing_if = "Option::is_none")]
    pub t_g: Option<f64>,
    #[serde(default)]
    pub initial_state: InitialState,
}

impl GateSpec {
    pub fn multiple(n: f64, initial_state: InitialState) -> Self {
        Self { n: Some(n), t_g: None, initial_state }
    }

    pub fn duration(t_g: f64, initial_state: InitialState) -> Self {
        Self { n: None, t_g: Some(t_g), initial_state }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match (self.n, self.t_g) {
            (Some(n), None) => {
                let twice = 2.0 * n;
                if !(n > 0.0 && (twice - twice.round()).abs() < 1e-12) {
                    return Err(DynamicsError::InvalidGate(format!("N must be a positive half-integer, got {n}")));
                }
                Ok(())
            }
            (None, Some(t)) if t > 0.0 && t.is_finite() => Ok(()),
            (None, Some(t)) => Err(DynamicsError::InvalidGate(format!("t_g must be > 0, got {t}"))),
            _ => Err(DynamicsError::InvalidGate("exactly one of n and t_g_s must be set".into())),
        }
    }

    /// `2πN/Ω` or the explicit duration.
    pub fn gate_time(&self, rabi: f64) -> Result<f64, DynamicsError> {
        self.validate()?;
        Ok(match (self.n, self.t_g) {
            (Some(n), _) => 2.0 * PI * n / rabi,
            (_, Some(t)) => t,
            _ => unreachable!(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    MonteCarlo,
    Analytic,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub mean_error: f64,
    pub std_error: f64,
    pub n_trials: usize,
    pub method: EstimateMethod,
}

impl ErrorEstimate {
    pub fn exact(value: f64, method: EstimateMethod) -> Self {
        Self { mean_error: value, std_error: 0.0, n_trials: 0, method }
    }
}

/// Phase and intensity noise of one laser (or one sideband).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LaserNoise {
    /// Frequency-noise density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<NoiseModel>,
    /// Relative-intensity-noise density, 1/Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<NoiseModel>,
}

impl LaserNoise {
    pub fn frequency(model: NoiseModel) -> Self {
        Self { frequency: Some(model), intensity: None }
    }

    pub fn intensity(model: NoiseModel) -> Self {
        Self { frequency: None, intensity: Some(model) }
    }

    fn is_quiet(&self) -> bool {
        self.frequency.is_none() && self.intensity.is_none()
    }
}

/// Noise on the first laser and, for two-laser drives, the second. For a correlated Λ drive the
/// phase of `laser1` is applied to both sidebands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DriveNoise {
    #[serde(default)]
    pub laser1: LaserNoise,
    #[serde(default)]
    pub laser2: LaserNoise,
}

impl DriveNoise {
    pub fn one(laser: LaserNoise) -> Self {
        Self { laser1: laser, laser2: LaserNoise::default() }
    }

    pub fn both(laser: LaserNoise) -> Self {
        Self { laser1: laser.clone(), laser2: laser }
    }

    pub fn validate(&self, drive: &DriveConfig) -> Result<(), DynamicsError> {
        for m in [&self.laser1, &self.laser2].into_iter().flat_map(|l| [&l.frequency, &l.intensity]).flatten() {
            m.validate().map_err(|e| DynamicsError::InvalidNoise(e.to_string()))?;
        }
        match drive {
            DriveConfig::OnePhoton(_) if !self.laser2.is_quiet() => {
                Err(DynamicsError::InvalidNoise("one-photon drive has no second laser".into()))
            }
            DriveConfig::Lambda(d) if d.correlated_phase && self.laser2.frequency.is_some() => Err(
                DynamicsError::InvalidNoise("correlated Λ drive takes its phase noise from laser1 only".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Propagation<const N: usize> {
    pub amplitudes: [Complex64; N],
    pub max_population: [f64; N],
    pub steps: usize,
}

fn zero_signal(_: f64) -> f64 {
    0.0
}

fn checked<const N: usize>(
    sol: ode::Solution<N>,
    initial: &[Complex64; N],
    icfg: &IntegratorConfig,
) -> Result<Propagation<N>, DynamicsError> {
    let n0: f64 = initial.iter().map(|c| c.norm_sqr()).sum();
    let n1: f64 = sol.y.iter().map(|c| c.norm_sqr()).sum();
    let limit = 10.0 * icfg.abs_tol;
    if (n1 - n0).abs() > limit {
        return Err(DynamicsError::NormDrift { deviation: (n1 - n0).abs(), limit });
    }
    Ok(Propagation { amplitudes: sol.y, max_population: sol.max_population, steps: sol.accepted })
}

/// Laboratory-frame two-level propagation with `Ω(t) = Ω0(1 + α(t)/2)`.
pub fn propagate_one_photon(
    omega0: f64,
    phase: &dyn Signal,
    intensity: Option<&dyn Signal>,
    initial: [Complex64; 2],
    t_final: f64,
    icfg: &IntegratorConfig,
) -> Result<Propagation<2>, DynamicsError> {
    let alpha = intensity.unwrap_or(&zero_signal);
    let rhs = |t: f64, c: &[Complex64; 2]| {
        let w = 0.5 * omega0 * (1.0 + 0.5 * alpha.value(t));
        let e = Complex64::from_polar(w, phase.value(t));
        [-I * e.conj() * c[1], -I * e * c[0]]
    };
    checked(ode::integrate(rhs, 0.0, initial, t_final, icfg)?, &initial, icfg)
}

/// Two-level propagation in the frame that follows the laser phase, driven by the frequency
/// deviation: `H = (Ω/2)σx − πδν σz`.
pub fn propagate_one_photon_following(
    omega0: f64,
    frequency: &dyn Signal,
    intensity: Option<&dyn Signal>,
    initial: [Complex64; 2],
    t_final: f64,
    icfg: &IntegratorConfig,
) -> Result<Propagation<2>, DynamicsError> {
    let alpha = intensity.unwrap_or(&zero_signal);
    let rhs = |t: f64, b: &[Complex64; 2]| {
        let w = 0.5 * omega0 * (1.0 + 0.5 * alpha.value(t));
        let z = PI * frequency.value(t);
        [-I * (w * b[1] - z * b[0]), -I * (w * b[0] + z * b[1])]
    };
    checked(ode::integrate(rhs, 0.0, initial, t_final, icfg)?, &initial, icfg)
}

/// Ladder amplitudes `(c_g, c_e, c_r)` in the interaction picture with explicit `e^{±iΔ_k t}`.
#[allow(clippy::too_many_arguments)]
pub fn propagate_two_photon(
    drive: &LadderDrive,
    phase1: &dyn Signal,
    phase2: &dyn Signal,
    intensity1: Option<&dyn Signal>,
    intensity2: Option<&dyn Signal>,
    initial: [Complex64; 3],
    t_final: f64,
    icfg: &IntegratorConfig,
) -> Result<Propagation<3>, DynamicsError> {
    drive.validate()?;
    let a1 = intensity1.unwrap_or(&zero_signal);
    let a2 = intensity2.unwrap_or(&zero_signal);
    let (o1, o2, d1, d2) = (drive.omega1, drive.omega2, drive.delta1, drive.delta2);
    let rhs = |t: f64, c: &[Complex64; 3]| {
        let e1 = Complex64::from_polar(0.5 * o1 * (1.0 + 0.5 * a1.value(t)), phase1.value(t) + d1 * t);
        let e2 = Complex64::from_polar(0.5 * o2 * (1.0 + 0.5 * a2.value(t)), phase2.value(t) + d2 * t);
        [-I * e1 * c[1], -I * (e1.conj() * c[0] + e2 * c[2]), -I * e2.conj() * c[1]]
    };
    checked(ode::integrate(rhs, 0.0, initial, t_final, icfg)?, &initial, icfg)
}

/// Λ amplitudes `(c_g, c_p, c_e)`. A correlated drive applies `phase_a` to both sidebands and
/// ignores `phase_b`.
#[allow(clippy::too_many_arguments)]
pub fn propagate_lambda(
    drive: &LambdaDrive,
    phase_a: &dyn Signal,
    phase_b: Option<&dyn Signal>,
    intensity1: Option<&dyn Signal>,
    intensity2: Option<&dyn Signal>,
    initial: [Complex64; 3],
    t_final: f64,
    icfg: &IntegratorConfig,
) -> Result<Propagation<3>, DynamicsError> {
    drive.validate()?;
    let phase_b: &dyn Signal = if drive.correlated_phase {
        phase_a
    } else {
        phase_b.ok_or_else(|| DynamicsError::InvalidNoise("uncorrelated Λ drive needs a second phase".into()))?
    };
    let a1 = intensity1.unwrap_or(&zero_signal);
    let a2 = intensity2.unwrap_or(&zero_signal);
    let (o1, o2, delta) = (drive.omega1 * 0.5, drive.omega2 * 0.5, drive.delta);
    let rhs = |t: f64, c: &[Complex64; 3]| {
        let g1 = o1 * Complex64::from_polar(1.0 + 0.5 * a1.value(t), phase_a.value(t));
        let g2 = o2 * Complex64::from_polar(1.0 + 0.5 * a2.value(t), phase_b.value(t));
        [
            -I * g1.conj() * c[1],
            -I * (delta * c[1] + g1 * c[0] + g2 * c[2]),
            -I * g2.conj() * c[1],
        ]
    };
    checked(ode::integrate(rhs, 0.0, initial, t_final, icfg)?, &initial, icfg)
}

/// Where the one-photon equations are integrated; the two are mathematically equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Laboratory,
    /// One-photon only: integrate the frequency trace in the phase-following frame.
    PhaseFollowing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRequest {
    pub drive: DriveConfig,
    pub gate: GateSpec,
    pub noise: DriveNoise,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Defaults to [`DriveConfig::default_integrator`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub frame: Frame,
    /// Average over the three initial states instead of using `gate.initial_state`.
    #[serde(default)]
    pub state_averaged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub estimate: ErrorEstimate,
    pub per_trial: Vec<f64>,
    /// Largest population seen in the non-qubit level, for three-level drives.
    pub max_intermediate_population: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn monte_carlo_error(
    drive: &DriveConfig,
    gate: &GateSpec,
    noise: &DriveNoise,
    n_trials: usize,
    base_seed: u64,
    icfg: &IntegratorConfig,
    scfg: &SynthesisConfig,
) -> Result<ErrorEstimate, DynamicsError> {
    let req = MonteCarloRequest {
        drive: *drive,
        gate: *gate,
        noise: noise.clone(),
        n_trials,
        base_seed,
        integrator: Some(*icfg),
        synthesis: *scfg,
        frame: Frame::Laboratory,
        state_averaged: false,
    };
    monte_carlo_run(&req).map(|r| r.estimate)
}

struct TrialNoise {
    phase: [Option<FourierSeries>; 2],
    frequency: Option<FourierSeries>,
    intensity: [Option<FourierSeries>; 2],
}

impl TrialNoise {
    fn synthesize(req: &MonteCarloRequest, trial: usize) -> Result<Self, DynamicsError> {
        let seed = mix_seed(req.base_seed, trial as u64);
        let cfg = &req.synthesis;
        let lasers = [&req.noise.laser1, &req.noise.laser2];
        let mut phase = [None, None];
        let mut intensity = [None, None];
        for (k, laser) in lasers.iter().enumerate() {
            if let Some(m) = &laser.frequency {
                phase[k] = Some(phase_series(m, cfg, mix_seed(seed, k as u64))?);
            }
            if let Some(m) = &laser.intensity {
                intensity[k] = Some(intensity_series(m, cfg, mix_seed(seed, 2 + k as u64))?);
            }
        }
        let frequency = match (&req.frame, &req.noise.laser1.frequency) {
            (Frame::PhaseFollowing, Some(m)) => Some(frequency_series(m, cfg, mix_seed(seed, 0))?),
            _ => None,
        };
        Ok(Self { phase, frequency, intensity })
    }
}

fn sampled<'a>(s: &'a Option<FourierSeries>, t: f64) -> Option<crate::synth::ChebyshevSampler<'a>> {
    s.as_ref().map(|s| s.sampler(0.0, t))
}

fn as_signal<'a, S: Signal>(s: &'a Option<S>) -> Option<&'a dyn Signal> {
    s.as_ref().map(|s| s as &dyn Signal)
}

/// Noisy final laboratory states, one per requested initial laboratory state, plus the phase of
/// the qubit coherence that the phase-following frame removes, at `t = 0` and `t_final`.
struct TrialOutcome {
    finals: Vec<Vec<Complex64>>,
    phase_start: f64,
    phase_end: f64,
    max_intermediate: f64,
}

/// Effective phase `φ` of the qubit coupling, entering as `e^{-iφ}` in the lower level's equation.
fn effective_phase(drive: &DriveConfig, noise: &TrialNoise, t: f64) -> f64 {
    let p = |k: usize| noise.phase[k].as_ref().map_or(0.0, |s| s.eval(t));
    match drive {
        DriveConfig::OnePhoton(_) => p(0),
        DriveConfig::TwoPhotonLadder(_) => -(p(0) + p(1)),
        DriveConfig::Lambda(d) if d.correlated_phase => 0.0,
        DriveConfig::Lambda(_) => p(0) - p(1),
    }
}

fn propagate_drive(
    drive: &DriveConfig,
    noise: Option<&TrialNoise>,
    initial: &[Complex64],
    t_final: f64,
    icfg: &IntegratorConfig,
) -> Result<(Vec<Complex64>, f64), DynamicsError> {
    let empty = TrialNoise { phase: [None, None], frequency: None, intensity: [None, None] };
    let noise = noise.unwrap_or(&empty);
    let ph = [sampled(&noise.phase[0], t_final), sampled(&noise.phase[1], t_final)];
    let it = [sampled(&noise.intensity[0], t_final), sampled(&noise.intensity[1], t_final)];
    let zero: &dyn Signal = &zero_signal;
    let phase = |k: usize| as_signal(&ph[k]).unwrap_or(zero);
    match drive {
        DriveConfig::OnePhoton(d) => {
            let init = [initial[0], initial[1]];
            let p = propagate_one_photon(d.omega0, phase(0), as_signal(&it[0]), init, t_final, icfg)?;
            Ok((p.amplitudes.to_vec(), 0.0))
        }
        DriveConfig::TwoPhotonLadder(d) => {
            let init = [initial[0], initial[1], initial[2]];
            let p = propagate_two_photon(d, phase(0), phase(1), as_signal(&it[0]), as_signal(&it[1]), init, t_final, icfg)?;
            Ok((p.amplitudes.to_vec(), p.max_population[1]))
        }
        DriveConfig::Lambda(d) => {
            let init = [initial[0], initial[1], initial[2]];
            let p = propagate_lambda(d, phase(0), Some(phase(1)), as_signal(&it[0]), as_signal(&it[1]), init, t_final, icfg)?;
            Ok((p.amplitudes.to_vec(), p.max_population[1]))
        }
    }
}

fn basis_state(levels: usize, index: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; levels];
    v[index] = ONE;
    v
}

/// `1 − |⟨a|b⟩|²/(|a|²|b|²)` written without cancellation.
fn infidelity(a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
    let na = a[0].norm_sqr() + a[1].norm_sqr();
    let nb = b[0].norm_sqr() + b[1].norm_sqr();
    (a[0] * b[1] - a[1] * b[0]).norm_sqr() / (na * nb)
}

/// Mean and its standard error from `⌊√n⌋` contiguous batches.
pub fn batch_means(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let nb = ((n as f64).sqrt().floor() as usize).max(2).min(n);
    if nb < 2 {
        return (mean, 0.0);
    }
    let means: Vec<f64> = (0..nb)
        .map(|b| {
            let (lo, hi) = (b * n / nb, (b + 1) * n / nb);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mb = means.iter().sum::<f64>() / nb as f64;
    let var = means.iter().map(|m| (m - mb).powi(2)).sum::<f64>() / (nb - 1) as f64;
    (mean, (var / nb as f64).sqrt())
}

fn request_integrator(req: &MonteCarloRequest) -> Result<IntegratorConfig, DynamicsError> {
    let icfg = req.integrator.unwrap_or_else(|| req.drive.default_integrator());
    icfg.validate()?;
    Ok(icfg)
}

pub fn monte_carlo_run(req: &MonteCarloRequest) -> Result<MonteCarloReport, DynamicsError> {
    req.drive.validate()?;
    req.noise.validate(&req.drive)?;
    req.synthesis.validate()?;
    if req.n_trials < 2 {
        return Err(DynamicsError::TooFewTrials(req.n_trials));
    }
    if req.frame == Frame::PhaseFollowing && !matches!(req.drive, DriveConfig::OnePhoton(_)) {
        return Err(DynamicsError::InvalidDrive("the phase-following frame is only available for one-photon drives".into()));
    }
    let icfg = request_integrator(req)?;
    let t_final = req.gate.gate_time(req.drive.effective_rabi())?;
    if req.synthesis.duration < t_final {
        return Err(DynamicsError::InvalidNoise(format!(
            "synthesis duration {:e} s is shorter than the gate {:e} s",
            req.synthesis.duration, t_final
        )));
    }
    let states: Vec<InitialState> = if req.state_averaged { InitialState::ALL.to_vec() } else { vec![req.gate.initial_state] };
    let levels = req.drive.levels();
    let (q0, q1) = req.drive.qubit_levels();
    let qubit = |v: &[Complex64]| [v[q0], v[q1]];

    // Noiseless reference, columns for both qubit levels.
    let reference: Vec<[Complex64; 2]> = [q0, q1]
        .iter()
        .map(|&q| propagate_drive(&req.drive, None, &basis_state(levels, q), t_final, &icfg).map(|(v, _)| qubit(&v)))
        .collect::<Result<_, _>>()?;
    let apply_ref = |psi: [Complex64; 2]| {
        [
            reference[0][0] * psi[0] + reference[1][0] * psi[1],
            reference[0][1] * psi[0] + reference[1][1] * psi[1],
        ]
    };

    let run_trial = |index: usize| -> Result<(f64, f64), DynamicsError> {
        let noise = TrialNoise::synthesize(req, index)?;
        let mut worst = 0.0f64;
        let mut total = 0.0;
        if req.frame == Frame::PhaseFollowing {
            let DriveConfig::OnePhoton(d) = req.drive else { unreachable!() };
            let nu = sampled(&noise.frequency, t_final);
            let it = sampled(&noise.intensity[0], t_final);
            for s in &states {
                let psi = s.amplitudes();
                let zero: &dyn Signal = &zero_signal;
                let p = propagate_one_photon_following(d.omega0, as_signal(&nu).unwrap_or(zero), as_signal(&it), psi, t_final, &icfg)?;
                total += infidelity(apply_ref(psi), p.amplitudes);
            }
            return Ok((total / states.len() as f64, 0.0));
        }
        let outcome = {
            let phase_start = effective_phase(&req.drive, &noise, 0.0);
            let phase_end = effective_phase(&req.drive, &noise, t_final);
            let mut finals = Vec::new();
            let columns: Vec<usize> = if req.state_averaged { vec![q0, q1] } else { vec![] };
            for &q in &columns {
                let (v, m) = propagate_drive(&req.drive, Some(&noise), &basis_state(levels, q), t_final, &icfg)?;
                worst = worst.max(m);
                finals.push(v);
            }
            TrialOutcome { finals, phase_start, phase_end, max_intermediate: worst }
        };
        let rot = |phi: f64| [Complex64::from_polar(1.0, 0.5 * phi), Complex64::from_polar(1.0, -0.5 * phi)];
        let (u0, u1) = (rot(outcome.phase_start), rot(outcome.phase_end));
        let mut worst = outcome.max_intermediate;
        for s in &states {
            let psi = s.amplitudes();
            // laboratory start state that appears as psi in the phase-following frame
            let lab = [u0[0].conj() * psi[0], u0[1].conj() * psi[1]];
            let end = if req.state_averaged {
                let (c0, c1) = (&outcome.finals[0], &outcome.finals[1]);
                [c0[q0] * lab[0] + c1[q0] * lab[1], c0[q1] * lab[0] + c1[q1] * lab[1]]
            } else {
                let mut init = vec![ZERO; levels];
                init[q0] = lab[0];
                init[q1] = lab[1];
                let (v, m) = propagate_drive(&req.drive, Some(&noise), &init, t_final, &icfg)?;
                worst = worst.max(m);
                qubit(&v)
            };
            let followed = [u1[0] * end[0], u1[1] * end[1]];
            total += infidelity(apply_ref(psi), followed);
        }
        Ok((total / states.len() as f64, worst))
    };

    let results: Vec<(f64, f64)> = (0..req.n_trials)
        .into_par_iter()
        .map(|i| run_trial(i).map_err(|e| DynamicsError::Trial { index: i, source: Box::new(e) }))
        .collect::<Result<_, _>>()?;
    let per_trial: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (mean, se) = batch_means(&per_trial);
    let mut warnings = Vec::new();
    let max_intermediate = (levels == 3).then(|| results.iter().map(|r| r.1).fold(0.0, f64::max));
    if let Some(m) = max_intermediate {
        if m > 0.01 {
            warnings.push(format!("intermediate-level population reached {m:.3e}"));
        }
    }
    Ok(MonteCarloReport {
        estimate: ErrorEstimate {
            mean_error: mean.clamp(0.0, 1.0),
            std_error: se,
            n_trials: req.n_trials,
            method: EstimateMethod::MonteCarlo,
        },
        per_trial,
        max_intermediate_population: max_intermediate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA0: f64 = 2.0 * PI * 1e6;

    fn lab_ground() -> [Complex64; 2] {
        [ONE, ZERO]
    }

    #[test]
    fn noiseless_pi_pulse() {
        let icfg = IntegratorConfig::new(1e-10, 1e-10);
        let p = propagate_one_photon(OMEGA0, &zero_signal, None, lab_ground(), PI / OMEGA0, &icfg).unwrap();
        assert!((p.amplitudes[1].norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_full_rotation() {
        let icfg = IntegratorConfig::new(1e-10, 1e-10);
        let p = propagate_one_photon(OMEGA0, &zero_signal, None, lab_ground(), 2.0 * PI / OMEGA0, &icfg).unwrap();
        assert!((p.amplitudes[0] + ONE).norm() < 1e-8);
    }

    #[test]
    fn linear_phase_is_static_detuning() {
        let dw = OMEGA0 / 10.0;
        let icfg = IntegratorConfig::new(1e-10, 1e-10);
        let t = PI / OMEGA0;
        let p = propagate_one_photon(OMEGA0, &|s: f64| dw * s, None, lab_ground(), t, &icfg).unwrap();
        let g = (OMEGA0 * OMEGA0 + dw * dw).sqrt();
        let oracle = (OMEGA0 / g).powi(2) * (0.5 * g * t).sin().powi(2);
        assert!((p.amplitudes[1].norm_sqr() - oracle).abs() < 1e-6);
    }

    #[test]
    fn ladder_noiseless_transfer() {
        let d = LadderDrive::standard();
        assert_eq!(d.total_detuning(), 0.0);
        assert!((d.effective_rabi() / OMEGA0 - 1.0).abs() < 1e-12);
        let icfg = DriveConfig::TwoPhotonLadder(d).default_integrator();
        let z: &dyn Signal = &zero_signal;
        let init = [ONE, ZERO, ZERO];
        let pi = propagate_two_photon(&d, z, z, None, None, init, PI / OMEGA0, &icfg).unwrap();
        assert!(pi.amplitudes[2].norm_sqr() >= 0.999);
        assert!(pi.max_population[1] < 5e-4, "{}", pi.max_population[1]);
        let full = propagate_two_photon(&d, z, z, None, None, init, 2.0 * PI / OMEGA0, &icfg).unwrap();
        assert!(full.amplitudes[0].norm_sqr() >= 0.999);
    }

    #[test]
    fn lambda_noiseless_transfer() {
        let d = LambdaDrive::standard(true);
        assert!((d.effective_rabi() / OMEGA0 - 1.0).abs() < 1e-12);
        let icfg = DriveConfig::Lambda(d).default_integrator();
        let z: &dyn Signal = &zero_signal;
        let p = propagate_lambda(&d, z, None, None, None, [ONE, ZERO, ZERO], PI / d.effective_rabi(), &icfg).unwrap();
        assert!(p.amplitudes[2].norm_sqr() >= 0.999);
    }

    #[test]
    fn ladder_validation() {
        let mut d = LadderDrive::standard();
        d.delta2 += 2.0 * PI * 1e3;
        assert!(d.validate().is_err());
        // |δ| < 10 Ω̃0
        assert!(LadderDrive::resonant(2.0 * PI * 100e6, 2.0 * PI * 100e6, 2.0 * PI * 100e6).is_err());
        let asym = LadderDrive::resonant(2.0 * PI * 150e6, 2.0 * PI * 80e6, 2.0 * PI * 5e9).unwrap();
        let plus = asym.total_detuning()
            + (asym.omega1.powi(2) - asym.omega2.powi(2)) / (2.0 * asym.intermediate_detuning());
        assert!(plus.abs() < 1e-6 * asym.effective_rabi());
    }

    #[test]
    fn gate_spec_rules() {
        assert!(GateSpec::multiple(0.75, InitialState::XPlus).validate().is_err());
        assert!(GateSpec { n: Some(1.0), t_g: Some(1e-6), ..Default::default() }.validate().is_err());
        assert!(GateSpec::default().validate().is_err());
        let t = GateSpec::multiple(1.5, InitialState::XPlus).gate_time(OMEGA0).unwrap();
        assert!((t - 1.5e-6).abs() < 1e-18);
    }

    fn request(noise: DriveNoise, n: usize) -> MonteCarloRequest {
        MonteCarloRequest {
            drive: DriveConfig::one_photon(OMEGA0),
            gate: GateSpec::multiple(0.5, InitialState::XPlus),
            noise,
            n_trials: n,
            base_seed: 17,
            integrator: None,
            synthesis: SynthesisConfig::standard(0),
            frame: Frame::Laboratory,
            state_averaged: false,
        }
    }

    #[test]
    fn zero_noise_zero_error() {
        let r = monte_carlo_run(&request(DriveNoise::default(), 4)).unwrap();
        assert!(r.estimate.mean_error < 1e-15);
        assert!(r.estimate.std_error < 1e-15);
        let mut q = request(DriveNoise::default(), 4);
        q.state_averaged = true;
        assert!(monte_carlo_run(&q).unwrap().estimate.mean_error < 1e-15);
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(matches!(
            monte_carlo_run(&request(DriveNoise::default(), 1)),
            Err(DynamicsError::TooFewTrials(1))
        ));
    }

    #[test]
    fn deterministic_mean() {
        let noise = DriveNoise::one(LaserNoise::frequency(NoiseModel::White { h0: 1000.0 }));
        let a = monte_carlo_run(&request(noise.clone(), 16)).unwrap();
        let b = monte_carlo_run(&request(noise, 16)).unwrap();
        assert_eq!(a.estimate.mean_error.to_bits(), b.estimate.mean_error.to_bits());
        assert_eq!(a.per_trial, b.per_trial);
    }

    #[test]
    fn frames_agree() {
        let noise = DriveNoise::one(LaserNoise::frequency(NoiseModel::White { h0: 1000.0 }));
        let lab = monte_carlo_run(&request(noise.clone(), 100)).unwrap();
        let mut q = request(noise, 100);
        q.frame = Frame::PhaseFollowing;
        let fol = monte_carlo_run(&q).unwrap();
        let diff = (lab.estimate.mean_error - fol.estimate.mean_error).abs();
        assert!(diff < lab.estimate.std_error.max(fol.estimate.std_error));
        for (a, b) in lab.per_trial.iter().zip(&fol.per_trial) {
            assert!((a - b).abs() < 1e-6 * a.max(1e-8), "{a} vs {b}");
        }
    }

    #[test]
    fn averaged_matches_individual_states() {
        let noise = DriveNoise::one(LaserNoise::frequency(NoiseModel::White { h0: 1000.0 }));
        let mut q = request(noise, 8);
        q.state_averaged = true;
        let avg = monte_carlo_run(&q).unwrap();
        let mut sum = vec![0.0; 8];
        for s in InitialState::ALL {
            let mut r = q.clone();
            r.state_averaged = false;
            r.gate.initial_state = s;
            for (acc, e) in sum.iter_mut().zip(monte_carlo_run(&r).unwrap().per_trial) {
                *acc += e / 3.0;
            }
        }
        for (a, b) in avg.per_trial.iter().zip(&sum) {
            assert!((a - b).abs() < 1e-7 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn batch_means_of_constant() {
        let (m, s) = batch_means(&[2.0; 50]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn request_json_round_trip() {
        let mut q = request(DriveNoise::one(LaserNoise::frequency(NoiseModel::White { h0: 40.0 })), 10);
        q.drive = DriveConfig::Lambda(LambdaDrive::standard(true));
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("omega1_rad_per_s"));
        let back: MonteCarloRequest = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }
}
