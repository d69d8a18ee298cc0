use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Rng;

use super::noise::NoiseParams;
use super::rain::{rain_color, RainParams, DEFAULT_AIRLIGHT};
use super::severity::{SEVERITY_MAX, SEVERITY_MIN};
use super::shake::{make_shake_kernel, BlurKernel, ShakeConfig};
use super::Degradation;
use crate::imgcore::rng::stage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FogParams {
    pub airlight: [f64; 3],
    pub beta: f64,
    /// Mean of the clamped transmission map; filled in when applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_mean: Option<f64>,
}

impl FogParams {
    pub fn validate(&self) -> Result<()> {
        if self.airlight.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::param("fog.airlight", "components must lie in [0,1]"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("fog.beta", format!("must be positive, got {}", self.beta)));
        }
        if let Some(t) = self.t_mean {
            if !(0.05..=1.0).contains(&t) {
                return Err(Error::param("fog.t_mean", format!("must lie in [0.05,1], got {t}")));
            }
        }
        Ok(())
    }
}

/// Ground truth for one degraded sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationRecipe {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fog: Option<FogParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shake: Option<BlurKernel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rain: Option<RainParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseParams>,
    /// Indexed by [`Degradation::index`]; absent degradations score 1.
    pub severity: [f64; 4],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DegradationRecipe {
    pub fn empty(seed: u64) -> Self {
        Self {
            seed,
            fog: None,
            shake: None,
            rain: None,
            noise: None,
            severity: [SEVERITY_MIN; 4],
            warnings: Vec::new(),
        }
    }

    pub fn presence(&self) -> [bool; 4] {
        [
            self.fog.is_some(),
            self.shake.is_some(),
            self.rain.is_some(),
            self.noise.is_some(),
        ]
    }

    pub fn is_present(&self, d: Degradation) -> bool {
        self.presence()[d.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = &self.fog {
            f.validate()?;
        }
        if let Some(r) = &self.rain {
            r.validate()?;
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        for (d, &s) in Degradation::ALL.iter().zip(&self.severity) {
            if !(SEVERITY_MIN..=SEVERITY_MAX).contains(&s) {
                return Err(Error::Invariant(format!(
                    "{} severity {s} outside [1,100]",
                    d.name()
                )));
            }
            if !self.is_present(*d) && s != SEVERITY_MIN {
                return Err(Error::Invariant(format!(
                    "{} is absent but has severity {s}",
                    d.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        rng.range(self.lo, self.hi)
    }

    fn check(&self, name: &'static str, min: f64, max: f64) -> Result<()> {
        if !(self.lo <= self.hi) || self.lo < min || self.hi > max {
            return Err(Error::param(
                name,
                format!("range [{}, {}] must be ordered and within [{min}, {max}]", self.lo, self.hi),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RainRanges {
    pub density: Range,
    pub slant: Range,
    pub streak_length: Range,
    pub streak_width: Range,
    pub opacity: Range,
}

impl Default for RainRanges {
    fn default() -> Self {
        Self {
            density: Range::new(0.002, 0.008),
            slant: Range::new(-0.35, 0.35),
            streak_length: Range::new(8.0, 24.0),
            streak_width: Range::new(1.0, 2.5),
            opacity: Range::new(0.5, 0.9),
        }
    }
}

/// Sampling configuration for [`sample_recipe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Inclusion probability per degradation, indexed by [`Degradation::index`].
    pub probabilities: [f64; 4],
    pub airlight: Range,
    pub beta: Range,
    pub noise_k: Range,
    pub noise_b: Range,
    pub shake: ShakeConfig,
    pub rain: RainRanges,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            probabilities: [0.5; 4],
            airlight: Range::new(0.7, 1.0),
            beta: Range::new(0.8, 3.0),
            noise_k: Range::new(0.0, 0.3),
            noise_b: Range::new(-20.0, 20.0),
            shake: ShakeConfig::default(),
            rain: RainRanges::default(),
        }
    }
}

impl SamplerConfig {
    /// Only the listed degradations, each with probability 1.
    pub fn only(degradations: &[Degradation]) -> Self {
        let mut probabilities = [0.0; 4];
        for d in degradations {
            probabilities[d.index()] = 1.0;
        }
        Self {
            probabilities,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param("probabilities", "each must lie in [0,1]"));
        }
        self.airlight.check("airlight", 0.0, 1.0)?;
        self.beta.check("beta", 1e-6, f64::MAX)?;
        self.noise_k.check("noise_k", 0.0, f64::MAX)?;
        self.noise_b.check("noise_b", f64::MIN, f64::MAX)?;
        self.rain.density.check("rain.density", 1e-12, 1.0 - 1e-12)?;
        self.rain.streak_length.check("rain.streak_length", 1.0, 1e4)?;
        self.rain.streak_width.check("rain.streak_width", 1e-3, 1e3)?;
        self.rain.opacity.check("rain.opacity", 0.0, 1.0)?;
        self.rain.slant.check("rain.slant", -1.6, 1.6)?;
        self.shake.validate()
    }
}

/// Draws presence flags and generator parameters. Measured quantities and the
/// final severities are filled in by [`super::degrade`].
pub fn sample_recipe(rng: &Rng, config: &SamplerConfig) -> Result<DegradationRecipe> {
    config.validate()?;
    let mut flags = rng.derive(stage::RECIPE);
    let present: Vec<bool> = config.probabilities.iter().map(|&p| flags.bernoulli(p)).collect();

    let mut params = rng.derive(stage::PARAMS);
    let mut recipe = DegradationRecipe::empty(rng.seed());
    if config.probabilities.iter().all(|&p| p == 0.0) {
        recipe
            .warnings
            .push("all inclusion probabilities are zero; recipe has no degradations".into());
    }

    // every block is drawn unconditionally so one flag never shifts another's parameters
    let airlight = [
        config.airlight.sample(&mut params),
        config.airlight.sample(&mut params),
        config.airlight.sample(&mut params),
    ];
    let beta = config.beta.sample(&mut params);
    let kernel = make_shake_kernel(&mut rng.derive(stage::SHAKE), &config.shake)?;
    let rain_ranges = &config.rain;
    let density = rain_ranges.density.sample(&mut params);
    let slant = rain_ranges.slant.sample(&mut params);
    let streak_length = rain_ranges.streak_length.sample(&mut params);
    let streak_width = rain_ranges.streak_width.sample(&mut params);
    let opacity = rain_ranges.opacity.sample(&mut params);
    let k = config.noise_k.sample(&mut params);
    let b = config.noise_b.sample(&mut params);

    if present[Degradation::Fog.index()] {
        recipe.fog = Some(FogParams {
            airlight,
            beta,
            t_mean: None,
        });
    }
    if present[Degradation::Shake.index()] {
        recipe.shake = Some(kernel);
    }
    if present[Degradation::Rain.index()] {
        let a = recipe.fog.as_ref().map_or(DEFAULT_AIRLIGHT, |f| f.airlight);
        recipe.rain = Some(RainParams {
            density,
            slant,
            streak_length,
            streak_width,
            opacity,
            color: rain_color(a),
            coverage: None,
        });
    }
    if present[Degradation::Noise.index()] {
        recipe.noise = Some(NoiseParams::new(k, b));
    }
    Ok(recipe)
}
