//! Mean-field dynamics of the oscillator amplitude `alpha = <a>`.
//!
//! ```text
//! d alpha / dt = -i (delta + chi + 2 chi |alpha|^2) alpha - i f(t) - kappa alpha
//! ```
//!
//! `kappa` defaults to 1 (one damping rate). The master equation damps the
//! mean amplitude at half that rate; set `amplitude_damping = 0.5` to obtain
//! the mean-field limit of the quantum model.

use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::SystemParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Semiclassical state: `(Re alpha, Im alpha)` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl PhasePoint {
    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub params: SystemParams,
    pub amplitude_damping: f64,
}

impl MeanField {
    pub fn new(params: SystemParams) -> Self {
        MeanField { params, amplitude_damping: 1.0 }
    }

    pub fn with_damping(params: SystemParams, amplitude_damping: f64) -> Self {
        MeanField { params, amplitude_damping }
    }

    #[inline]
    pub fn rhs(&self, alpha: Complex64, t: f64) -> Complex64 {
        let p = &self.params;
        let shift = p.delta + p.chi + 2.0 * p.chi * alpha.norm_sqr();
        -I * shift * alpha - I * p.drive.evaluate(t) - self.amplitude_damping * alpha
    }

    #[inline]
    pub fn rk4_step(&self, alpha: Complex64, t: f64, h: f64) -> Complex64 {
        let k1 = self.rhs(alpha, t);
        let k2 = self.rhs(alpha + 0.5 * h * k1, t + 0.5 * h);
        let k3 = self.rhs(alpha + 0.5 * h * k2, t + 0.5 * h);
        let k4 = self.rhs(alpha + h * k3, t + h);
        alpha + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
    }

    /// Advances `alpha` by `steps` RK4 steps of size `h` starting at `t`.
    fn advance(&self, mut alpha: Complex64, t: f64, h: f64, steps: usize) -> Result<Complex64> {
        for k in 0..steps {
            alpha = self.rk4_step(alpha, t + k as f64 * h, h);
        }
        if !(alpha.re.is_finite() && alpha.im.is_finite()) {
            return Err(Error::NonFiniteState { t: t + steps as f64 * h });
        }
        Ok(alpha)
    }
}

/// `d alpha / dt` with unit amplitude damping.
pub fn mean_field_rhs(params: &SystemParams, alpha: Complex64, t: f64) -> Complex64 {
    MeanField::new(*params).rhs(alpha, t)
}

/// Fixed-step RK4 from `t_start` to `t_end`, sampled every `sample_every` steps.
pub fn integrate_trajectory(
    model: &MeanField,
    alpha0: Complex64,
    t_start: f64,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Vec<PhasePoint>> {
    if !(dt > 0.0) || sample_every == 0 || !(t_end >= t_start) {
        return Err(Error::InvalidParameter(format!(
            "bad integration window [{t_start}, {t_end}] with dt = {dt}"
        )));
    }
    let n_steps = ((t_end - t_start) / dt).round() as usize;
    let mut out = Vec::with_capacity(n_steps / sample_every + 1);
    let mut alpha = alpha0;
    out.push(PhasePoint { x: alpha.re, y: alpha.im, t: t_start });
    let mut done = 0;
    while done < n_steps {
        let chunk = sample_every.min(n_steps - done);
        alpha = model.advance(alpha, t_start + done as f64 * dt, dt, chunk)?;
        done += chunk;
        if done % sample_every == 0 || done == n_steps {
            out.push(PhasePoint { x: alpha.re, y: alpha.im, t: t_start + done as f64 * dt });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovConfig {
    /// Separation restored at every renormalization.
    pub d0: f64,
    pub renorm_every: usize,
    pub t_transient: f64,
    /// End of the averaging window (absolute time).
    pub t_total: f64,
    pub dt: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig { d0: 1e-8, renorm_every: 10, t_transient: 100.0, t_total: 2000.0, dt: 1e-3 }
    }
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) {
            return Err(Error::InvalidParameter("d0 must be positive".into()));
        }
        if !(self.t_total > self.t_transient) || self.t_transient < 0.0 {
            return Err(Error::InvalidParameter("need t_total > t_transient >= 0".into()));
        }
        if !(self.dt > 0.0) || self.renorm_every == 0 {
            return Err(Error::InvalidParameter("need dt > 0 and renorm_every >= 1".into()));
        }
        Ok(())
    }
}

/// Largest Lyapunov exponent by the two-trajectory method: a companion
/// trajectory is kept at distance `d0` from the reference and the
/// logarithmic growth between renormalizations is averaged over the window.
pub fn lyapunov_max(model: &MeanField, cfg: &LyapunovConfig, alpha0: Complex64) -> Result<f64> {
    cfg.validate()?;
    let h = cfg.dt;
    let transient_steps = (cfg.t_transient / h).round() as usize;
    let window_steps = ((cfg.t_total - cfg.t_transient) / h).round() as usize;
    let mut reference = model.advance(alpha0, 0.0, h, transient_steps)?;
    let mut t = transient_steps as f64 * h;
    let mut companion = reference + cfg.d0;
    let mut log_sum = 0.0;
    let mut done = 0;
    while done < window_steps {
        let chunk = cfg.renorm_every.min(window_steps - done);
        reference = model.advance(reference, t, h, chunk)?;
        companion = model.advance(companion, t, h, chunk)?;
        t += chunk as f64 * h;
        done += chunk;
        let sep = companion - reference;
        let d = sep.norm();
        if d == 0.0 {
            // collapsed onto the reference below round-off; restart the offset
            log_sum += (f64::MIN_POSITIVE / cfg.d0).ln();
            companion = reference + cfg.d0;
            continue;
        }
        log_sum += (d / cfg.d0).ln();
        companion = reference + sep * (cfg.d0 / d);
    }
    Ok(log_sum / (window_steps as f64 * h))
}

/// Stroboscopic samples of `(Re alpha, Im alpha)` once per drive period,
/// starting at the first period boundary at or after `t_transient`.
pub fn poincare_section(
    model: &MeanField,
    alpha0: Complex64,
    n_points: usize,
    t_transient: f64,
    dt_hint: f64,
) -> Result<Vec<(f64, f64)>> {
    let period = model.params.drive.period().ok_or(Error::NoPeriod)?;
    if !(dt_hint > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let steps_per_period = (period / dt_hint).ceil().max(1.0) as usize;
    let h = period / steps_per_period as f64;
    let origin = model.params.drive.phase_origin();
    let first = ((t_transient - origin) / period).ceil().max(0.0) as usize;

    let mut alpha = alpha0;
    let mut t = 0.0;
    // reach the drive phase origin, then whole periods
    if origin > 0.0 {
        let n = (origin / h).ceil() as usize;
        let step = origin / n as f64;
        alpha = model.advance(alpha, 0.0, step, n)?;
        t = origin;
    }
    for k in 0..first {
        alpha = model.advance(alpha, origin + k as f64 * period, h, steps_per_period)?;
        t = origin + (k + 1) as f64 * period;
    }
    let mut out = Vec::with_capacity(n_points);
    for k in 0..n_points {
        if k > 0 {
            let t0 = origin + (first + k - 1) as f64 * period;
            alpha = model.advance(alpha, t0, h, steps_per_period)?;
            t = t0 + period;
        }
        out.push((alpha.re, alpha.im));
    }
    let _ = t;
    Ok(out)
}

/// Number of occupied cells when the plane is tiled with squares of side `resolution`.
pub fn distinct_points(points: &[(f64, f64)], resolution: f64) -> usize {
    points
        .iter()
        .map(|&(x, y)| ((x / resolution).floor() as i64, (y / resolution).floor() as i64))
        .collect::<HashSet<_>>()
        .len()
}

/// Number of groups after greedy single-link clustering at distance `resolution`.
pub fn cluster_count(points: &[(f64, f64)], resolution: f64) -> usize {
    let mut centers: Vec<(f64, f64)> = Vec::new();
    for &(x, y) in points {
        if !centers.iter().any(|&(cx, cy)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() <= resolution) {
            centers.push((x, y));
        }
    }
    centers.len()
}

/// Largest distance between any two points.
pub fn diameter(points: &[(f64, f64)]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
    }
    best
}
