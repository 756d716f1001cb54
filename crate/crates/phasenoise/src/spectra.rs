//! Frequency-noise spectral models and phase-noise transforms.
//!
//! Every density here is two-sided: the variance of `δν` is `∫_{-∞}^{∞} S_δν(f) df`.
//! One-sided data must be halved by the caller before constructing a model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, QuadError, Tolerance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectraError {
    #[error("invalid noise model: {0}")]
    InvalidModel(String),
    #[error("phase-noise density is singular at f = 0")]
    ZeroFrequency,
    #[error("crossover frequency has no solution: total tail integral {total:e} < 1/2")]
    NoCrossover { total: f64 },
    #[error("variance diverges for unbounded white noise")]
    Divergent,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Parametric `S_δν(f)` in Hz²/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    White {
        #[serde(rename = "h0_hz2_per_hz")]
        h0: f64,
    },
    BandLimitedWhite {
        #[serde(rename = "h0_hz2_per_hz")]
        h0: f64,
        #[serde(rename = "fc_hz")]
        fc: f64,
    },
    ServoBump {
        #[serde(rename = "hg_hz2_per_hz")]
        hg: f64,
        #[serde(rename = "sigma_g_hz")]
        sigma_g: f64,
        #[serde(rename = "fg_hz")]
        fg: f64,
    },
    Composite { terms: Vec<NoiseModel> },
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp()
}

/// Gaussian bumps are treated as negligible this many widths from their centers.
pub(crate) const BUMP_SPAN: f64 = 12.0;

impl NoiseModel {
    pub fn zero() -> Self {
        NoiseModel::Composite { terms: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), SpectraError> {
        let bad = |msg: &str| Err(SpectraError::InvalidModel(msg.to_string()));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            NoiseModel::White { h0 } if !finite_nonneg(h0) => bad("h0 must be finite and >= 0"),
            NoiseModel::BandLimitedWhite { h0, fc } => {
                if !finite_nonneg(h0) {
                    bad("h0 must be finite and >= 0")
                } else if !finite_pos(fc) {
                    bad("fc must be > 0")
                } else {
                    Ok(())
                }
            }
            NoiseModel::ServoBump { hg, sigma_g, fg } => {
                if !finite_nonneg(hg) {
                    bad("hg must be finite and >= 0")
                } else if !finite_pos(sigma_g) {
                    bad("sigma_g must be > 0")
                } else if !finite_pos(fg) {
                    bad("fg must be > 0")
                } else {
                    Ok(())
                }
            }
            NoiseModel::Composite { ref terms } => terms.iter().try_for_each(|t| t.validate()),
            _ => Ok(()),
        }
    }

    /// `S_δν(f)`; even in `f`.
    pub fn psd_delta_nu(&self, f: f64) -> f64 {
        let f = f.abs();
        match *self {
            NoiseModel::White { h0 } => h0,
            NoiseModel::BandLimitedWhite { h0, fc } => {
                if f <= fc {
                    h0
                } else {
                    0.0
                }
            }
            NoiseModel::ServoBump { hg, sigma_g, fg } => {
                hg * (gaussian(f - fg, sigma_g) + gaussian(f + fg, sigma_g))
            }
            NoiseModel::Composite { ref terms } => terms.iter().map(|t| t.psd_delta_nu(f)).sum(),
        }
    }

    /// `S_φ(f) = S_δν(f) / f²`.
    pub fn psd_phi(&self, f: f64) -> Result<f64, SpectraError> {
        if f == 0.0 {
            return Err(SpectraError::ZeroFrequency);
        }
        Ok(self.psd_delta_nu(f) / (f * f))
    }

    /// Flattened list of non-composite terms.
    pub fn leaves(&self) -> Vec<&NoiseModel> {
        match self {
            NoiseModel::Composite { terms } => terms.iter().flat_map(|t| t.leaves()).collect(),
            other => vec![other],
        }
    }

    /// True when the model contains an unbounded white term.
    pub fn has_unbounded_white(&self) -> bool {
        self.leaves().iter().any(|t| matches!(t, NoiseModel::White { .. }))
    }

    /// Nonnegative frequencies where the density has edges or concentrated structure.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for leaf in self.leaves() {
            match *leaf {
                NoiseModel::BandLimitedWhite { fc, .. } => pts.push(fc),
                NoiseModel::ServoBump { sigma_g, fg, .. } => {
                    for k in [-BUMP_SPAN, -3.0, -1.0, 0.0, 1.0, 3.0, BUMP_SPAN] {
                        let f = fg + k * sigma_g;
                        if f > 0.0 {
                            pts.push(f);
                        }
                    }
                }
                _ => {}
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Upper frequency beyond which the density vanishes, if any.
    pub fn max_frequency(&self) -> Option<f64> {
        let mut fmax: f64 = 0.0;
        for leaf in self.leaves() {
            match *leaf {
                NoiseModel::White { h0 } if h0 > 0.0 => return None,
                NoiseModel::BandLimitedWhite { fc, .. } => fmax = fmax.max(fc),
                NoiseModel::ServoBump { sigma_g, fg, .. } => fmax = fmax.max(fg + BUMP_SPAN * sigma_g),
                _ => {}
            }
        }
        Some(fmax)
    }

    /// Two-sided variance `∫ S_δν df`.
    pub fn variance_delta_nu(&self) -> Result<f64, SpectraError> {
        self.validate()?;
        let mut total = 0.0;
        for leaf in self.leaves() {
            total += match *leaf {
                NoiseModel::White { h0 } if h0 > 0.0 => return Err(SpectraError::Divergent),
                NoiseModel::White { .. } => 0.0,
                NoiseModel::BandLimitedWhite { h0, fc } => 2.0 * h0 * fc,
                NoiseModel::ServoBump { hg, sigma_g, .. } => {
                    2.0 * hg * sigma_g * (2.0 * std::f64::consts::PI).sqrt()
                }
                NoiseModel::Composite { .. } => unreachable!("leaves are flattened"),
            };
        }
        Ok(total)
    }

    /// `2 ∫_x^∞ S_δν(f) / f² df`, the phase variance carried by frequencies above `x > 0`.
    pub fn phase_tail(&self, x: f64) -> Result<f64, SpectraError> {
        let tol = Tolerance::new(1e-9, 1e-10);
        let mut total = 0.0;
        for leaf in self.leaves() {
            total += match *leaf {
                NoiseModel::White { h0 } => 2.0 * h0 / x,
                NoiseModel::BandLimitedWhite { h0, fc } => {
                    if x < fc {
                        2.0 * h0 * (1.0 / x - 1.0 / fc)
                    } else {
                        0.0
                    }
                }
                NoiseModel::ServoBump { hg, sigma_g, fg } => {
                    if hg == 0.0 {
                        0.0
                    } else {
                        let hi = fg + BUMP_SPAN * sigma_g;
                        let lo = if fg > BUMP_SPAN * sigma_g {
                            x.max(fg - BUMP_SPAN * sigma_g)
                        } else {
                            x
                        };
                        if lo >= hi {
                            0.0
                        } else {
                            let mut pts = vec![lo];
                            pts.extend(leaf.breakpoints().into_iter().filter(|&p| p > lo && p < hi));
                            pts.push(hi);
                            2.0 * quad::integrate_with_breaks(|f| leaf.psd_delta_nu(f) / (f * f), &pts, tol)?.value
                        }
                    }
                }
                NoiseModel::Composite { .. } => unreachable!("leaves are flattened"),
            };
        }
        Ok(total)
    }

    /// Frequency `f_x` above which the accumulated phase variance `2∫_{f_x}^∞ S_δν/f² df` equals 1/2.
    pub fn crossover_fx(&self) -> Result<f64, SpectraError> {
        self.validate()?;
        if let NoiseModel::White { h0 } = *self {
            if h0 > 0.0 {
                return Ok(4.0 * h0);
            }
            return Err(SpectraError::NoCrossover { total: 0.0 });
        }
        let target = 0.5;
        let mut lo = 1e-9;
        let at_lo = self.phase_tail(lo)?;
        if at_lo < target {
            return Err(SpectraError::NoCrossover { total: at_lo });
        }
        let mut hi = 1.0;
        while self.phase_tail(hi)? >= target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e18 {
                return Err(SpectraError::NoCrossover { total: f64::INFINITY });
            }
        }
        // geometric bisection; the tail is monotone in x
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.phase_tail(mid)? >= target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-13 {
                break;
            }
        }
        Ok((lo * hi).sqrt())
    }
}

/// Integrated phase-noise power of one symmetric servo-bump pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpPower {
    pub s_g: f64,
    /// Set when `sigma_g > fg / 3`, where the narrow-bump reduction is no longer reliable.
    pub narrow_bump_violated: bool,
}

pub fn servo_bump_power(hg: f64, sigma_g: f64, fg: f64) -> BumpPower {
    BumpPower {
        s_g: (8.0 * std::f64::consts::PI).sqrt() * sigma_g * hg / (fg * fg),
        narrow_bump_violated: sigma_g > fg / 3.0,
    }
}
