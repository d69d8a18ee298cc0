//! Closed-form severity scores on the `[1, 100]` scale.

use super::Degradation;

pub const SEVERITY_MIN: f64 = 1.0;
pub const SEVERITY_MAX: f64 = 100.0;

/// Transmission clamp floor; a mean transmission this low is maximal fog.
pub const T_FLOOR: f64 = 0.05;
/// Mean normalized noise sigma that maps to the top of the scale.
pub const NOISE_SIGMA_REF: f64 = 0.05;

pub fn fog_raw(t_mean: f64) -> f64 {
    (1.0 - t_mean) / (1.0 - T_FLOOR) * 99.0 + 1.0
}

pub fn shake_raw(r_rms: f64, r_max: f64) -> f64 {
    r_rms / r_max * 99.0 + 1.0
}

pub fn rain_raw(coverage: f64) -> f64 {
    coverage * 99.0 + 1.0
}

pub fn noise_raw(sigma_bar: f64) -> f64 {
    sigma_bar / NOISE_SIGMA_REF * 99.0 + 1.0
}

pub fn clamp_score(s: f64) -> f64 {
    s.clamp(SEVERITY_MIN, SEVERITY_MAX)
}

/// Quantities measured while degrading; `None` means the degradation is absent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Measurements {
    pub t_mean: Option<f64>,
    /// `(r_rms, r_max)` of the shake kernel.
    pub shake_radius: Option<(f64, f64)>,
    pub coverage: Option<f64>,
    pub sigma_bar: Option<f64>,
}

/// Severity per degradation, indexed by [`Degradation::index`]. Absent entries score 1.
pub fn severity_scores(m: &Measurements) -> [f64; 4] {
    let mut s = [SEVERITY_MIN; 4];
    if let Some(t) = m.t_mean {
        s[Degradation::Fog.index()] = clamp_score(fog_raw(t));
    }
    if let Some((r, rmax)) = m.shake_radius {
        s[Degradation::Shake.index()] = clamp_score(shake_raw(r, rmax));
    }
    if let Some(c) = m.coverage {
        s[Degradation::Rain.index()] = clamp_score(rain_raw(c));
    }
    if let Some(sig) = m.sigma_bar {
        s[Degradation::Noise.index()] = clamp_score(noise_raw(sig));
    }
    s
}
