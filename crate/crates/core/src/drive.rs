//! Time-dependent drive amplitude `f(t)`.
//!
//! All quantities are dimensionless: amplitudes in units of the damping
//! rate and times in units of its inverse.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pulses farther than this many widths from `t` are skipped.
pub const GAUSSIAN_WINDOW: f64 = 6.0;

/// Drive families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveSpec {
    /// `f(t) = amp`.
    Constant { amp: f64 },
    /// `f(t) = f0 + f1 exp(-i delta_mod t)`.
    Bichromatic { f0: f64, f1: f64, delta_mod: f64 },
    /// `f(t) = amp * sum_{n>=0} exp(-(t - offset - n period)^2 / width^2)`.
    GaussianTrain {
        amp: f64,
        width: f64,
        period: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl Default for DriveSpec {
    fn default() -> Self {
        DriveSpec::Constant { amp: 0.0 }
    }
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("drive {name} must be finite, got {v}")))
            }
        };
        match *self {
            DriveSpec::Constant { amp } => finite("amp", amp),
            DriveSpec::Bichromatic { f0, f1, delta_mod } => {
                finite("f0", f0)?;
                finite("f1", f1)?;
                finite("delta_mod", delta_mod)?;
                if delta_mod == 0.0 {
                    return Err(Error::InvalidParameter(
                        "bichromatic modulation frequency must be nonzero".into(),
                    ));
                }
                Ok(())
            }
            DriveSpec::GaussianTrain { amp, width, period, offset } => {
                finite("amp", amp)?;
                finite("offset", offset)?;
                if !(width > 0.0 && width.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "pulse width must be positive, got {width}"
                    )));
                }
                if !(period > 0.0 && period.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "pulse period must be positive, got {period}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Drive amplitude at time `t`.
    pub fn evaluate(&self, t: f64) -> Complex64 {
        match *self {
            DriveSpec::Constant { amp } => Complex64::new(amp, 0.0),
            DriveSpec::Bichromatic { f0, f1, delta_mod } => {
                Complex64::new(f0, 0.0) + f1 * Complex64::from_polar(1.0, -delta_mod * t)
            }
            DriveSpec::GaussianTrain { amp, width, period, offset } => {
                let x = t - offset;
                let reach = GAUSSIAN_WINDOW * width;
                let lo = ((x - reach) / period).ceil().max(0.0);
                let hi = ((x + reach) / period).floor();
                let mut sum = 0.0;
                if hi >= lo {
                    let (lo, hi) = (lo as u64, hi as u64);
                    for n in lo..=hi {
                        let u = (x - n as f64 * period) / width;
                        sum += (-u * u).exp();
                    }
                }
                Complex64::new(amp * sum, 0.0)
            }
        }
    }

    /// Period of the modulation, if any.
    pub fn period(&self) -> Option<f64> {
        match *self {
            DriveSpec::Constant { .. } => None,
            DriveSpec::Bichromatic { delta_mod, .. } => Some(2.0 * PI / delta_mod.abs()),
            DriveSpec::GaussianTrain { period, .. } => Some(period),
        }
    }

    /// Phase origin of the modulation (pulse offset for trains, zero otherwise).
    pub fn phase_origin(&self) -> f64 {
        match *self {
            DriveSpec::GaussianTrain { offset, .. } => offset,
            _ => 0.0,
        }
    }

    /// Same drive with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> DriveSpec {
        match *self {
            DriveSpec::Constant { amp } => DriveSpec::Constant { amp: amp * factor },
            DriveSpec::Bichromatic { f0, f1, delta_mod } => DriveSpec::Bichromatic {
                f0: f0 * factor,
                f1: f1 * factor,
                delta_mod,
            },
            DriveSpec::GaussianTrain { amp, width, period, offset } => DriveSpec::GaussianTrain {
                amp: amp * factor,
                width,
                period,
                offset,
            },
        }
    }

    /// Upper bound on `|f(t)|` over all `t >= 0`.
    pub fn max_amplitude(&self) -> f64 {
        match *self {
            DriveSpec::Constant { amp } => amp.abs(),
            DriveSpec::Bichromatic { f0, f1, .. } => f0.abs() + f1.abs(),
            DriveSpec::GaussianTrain { amp, width, period, .. } => {
                // Overlapping pulses: at most the peak plus the tails on both sides.
                let mut sum = 1.0;
                let mut n = 1.0;
                loop {
                    let u = n * period / width;
                    let term = (-u * u).exp();
                    sum += 2.0 * term;
                    if term < 1e-17 || n > 1e6 {
                        break;
                    }
                    n += 1.0;
                }
                amp.abs() * sum
            }
        }
    }
}

/// Alias matching the operation name used elsewhere in the crate.
pub fn drive_period(spec: &DriveSpec) -> Option<f64> {
    spec.period()
}
