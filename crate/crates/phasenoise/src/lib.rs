//! Laser phase and intensity noise: spectra, time-series synthesis, self-heterodyne
//! analysis, spectrum fitting, Monte-Carlo Rabi dynamics and closed-form gate errors.
//!
//! All power spectral densities are two-sided.

pub mod quad;
pub mod special;
pub mod spectra;
pub mod synth;
pub mod ode;
pub mod dynamics;
pub mod analytic;
pub mod heterodyne;
pub mod fitting;
