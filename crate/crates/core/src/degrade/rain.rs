//! Rain streaks: sparse random seeds elongated by an oriented line blur.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{Image, Plane, Rng};

/// Streak-layer intensity above which a pixel counts as covered by visible rain.
pub const COVERAGE_THRESHOLD: f64 = 10.0 / 255.0;
/// Rain color as a fraction of the atmospheric light.
pub const COLOR_FROM_AIRLIGHT: f64 = 0.9;
/// Atmospheric light assumed for rain color when no fog is present.
pub const DEFAULT_AIRLIGHT: [f64; 3] = [1.0, 1.0, 1.0];

const SEED_BRIGHTNESS: (f64, f64) = (0.7, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainParams {
    /// Probability that a pixel spawns a streak.
    pub density: f64,
    /// Streak angle away from vertical, radians (positive leans right going down).
    pub slant: f64,
    pub streak_length: f64,
    pub streak_width: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Fraction of pixels covered by visible streaks; filled in when applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

impl RainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(Error::param("rain.density", format!("must lie in (0,1), got {}", self.density)));
        }
        if !(self.streak_length >= 1.0) || !(self.streak_width > 0.0) {
            return Err(Error::param("rain.streak_length", "length must be >= 1 and width > 0"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::param("rain.opacity", format!("must lie in [0,1], got {}", self.opacity)));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::param("rain.color", "components must lie in [0,1]"));
        }
        if let Some(c) = self.coverage {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::param("rain.coverage", format!("must lie in [0,1], got {c}")));
            }
        }
        Ok(())
    }
}

pub fn rain_color(airlight: [f64; 3]) -> [f64; 3] {
    airlight.map(|a| COLOR_FROM_AIRLIGHT * a)
}

/// Anti-aliased line stamp: peak 1 along the streak axis, Gaussian across it.
fn streak_stamp(rain: &RainParams) -> (usize, Vec<f64>) {
    let half_len = rain.streak_length / 2.0;
    let sigma = rain.streak_width / 2.0;
    let radius = (half_len + 2.0 * sigma + 1.0).ceil() as usize;
    let side = 2 * radius + 1;
    let (s, c) = rain.slant.sin_cos();
    let mut stamp = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            let dy = i as f64 - radius as f64;
            let dx = j as f64 - radius as f64;
            let along = dx * s + dy * c;
            let across = dx * c - dy * s;
            let a = (half_len + 0.5 - along.abs()).clamp(0.0, 1.0);
            let b = (-across * across / (2.0 * sigma * sigma)).exp();
            stamp[i * side + j] = a * b;
        }
    }
    (radius, stamp)
}

/// Builds the content-independent streak layer in `[0, 1]`.
pub fn rain_layer(height: usize, width: usize, rain: &RainParams, rng: &mut Rng) -> Result<Plane> {
    rain.validate()?;
    let (radius, stamp) = streak_stamp(rain);
    let side = 2 * radius + 1;
    let mut layer = Plane::filled(height, width, 0.0)?;
    for y in 0..height {
        for x in 0..width {
            if !rng.bernoulli(rain.density) {
                continue;
            }
            let brightness = rng.range(SEED_BRIGHTNESS.0, SEED_BRIGHTNESS.1);
            for i in 0..side {
                let yy = y as isize + i as isize - radius as isize;
                if yy < 0 || yy >= height as isize {
                    continue;
                }
                for j in 0..side {
                    let xx = x as isize + j as isize - radius as isize;
                    if xx < 0 || xx >= width as isize {
                        continue;
                    }
                    let v = stamp[i * side + j];
                    if v > 0.0 {
                        let (yy, xx) = (yy as usize, xx as usize);
                        layer.set(yy, xx, layer.get(yy, xx) + brightness * v);
                    }
                }
            }
        }
    }
    for v in layer.data_mut() {
        *v = v.min(1.0);
    }
    Ok(layer)
}

pub fn coverage(layer: &Plane) -> f64 {
    let n = layer.data().iter().filter(|&&v| v > COVERAGE_THRESHOLD).count();
    n as f64 / layer.data().len() as f64
}

/// Composites streaks additively; returns the image and the streak coverage.
pub fn apply_rain(img: &Image, rain: &RainParams, rng: &mut Rng) -> Result<(Image, f64)> {
    let (h, w) = img.dims();
    let layer = rain_layer(h, w, rain, rng)?;
    let cov = coverage(&layer);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let l = layer.get(y, x);
            if l == 0.0 {
                continue;
            }
            for c in 0..3 {
                let v = img.get(y, x, c) + rain.opacity * l * rain.color[c];
                out.set(y, x, c, v.clamp(0.0, 1.0));
            }
        }
    }
    Ok((out, cov))
}
