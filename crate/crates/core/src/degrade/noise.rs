//! Signal-dependent Gaussian readout noise, `sigma(x) = k x + b` in the 8-bit domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{Image, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub k: f64,
    pub b: f64,
    /// Mean normalized sigma after the clamp at zero; filled in when applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_bar: Option<f64>,
}

impl NoiseParams {
    pub fn new(k: f64, b: f64) -> Self {
        Self {
            k,
            b,
            sigma_bar: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.k.is_finite() || self.k < 0.0 || !self.b.is_finite() {
            return Err(Error::param("noise.k", format!("need finite k >= 0 and finite b, got k={} b={}", self.k, self.b)));
        }
        Ok(())
    }

    /// Normalized sigma for a normalized intensity.
    #[inline]
    pub fn sigma_at(&self, v: f64) -> f64 {
        (self.k * 255.0 * v + self.b).max(0.0) / 255.0
    }
}

/// Adds noise and clips; returns the image and the mean normalized sigma.
pub fn apply_noise(img: &Image, noise: &NoiseParams, rng: &mut Rng) -> Result<(Image, f64)> {
    noise.validate()?;
    let mut out = img.clone();
    let mut sigma_sum = 0.0;
    for v in out.data_mut() {
        let sigma = noise.sigma_at(*v);
        sigma_sum += sigma;
        let n = rng.normal();
        *v = (*v + sigma * n).clamp(0.0, 1.0);
    }
    let sigma_bar = sigma_sum / img.data().len() as f64;
    Ok((out, sigma_bar))
}
