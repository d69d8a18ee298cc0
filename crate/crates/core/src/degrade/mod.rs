//! Compositional degradation `I = B_k(t J + (1 - t) A) + S(J) + N`: fog, then shake
//! blur of the fogged image, then additive rain, then additive readout noise.

pub mod fog;
pub mod noise;
pub mod rain;
pub mod recipe;
pub mod severity;
pub mod shake;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imgcore::rng::stage;
use crate::imgcore::{convolve2d, Image, Rng};

pub use fog::{apply_fog, prior_from_depth, synth_depth_prior, FogLayer};
pub use noise::{apply_noise, NoiseParams};
pub use rain::{apply_rain, RainParams};
pub use recipe::{sample_recipe, DegradationRecipe, FogParams, Range, RainRanges, SamplerConfig};
pub use severity::{severity_scores, Measurements};
pub use shake::{kernel_stats, make_shake_kernel, BlurKernel, KernelStats, ShakeConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degradation {
    Fog,
    Shake,
    Rain,
    Noise,
}

impl Degradation {
    pub const ALL: [Degradation; 4] = [
        Degradation::Fog,
        Degradation::Shake,
        Degradation::Rain,
        Degradation::Noise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Degradation::Fog => "fog",
            Degradation::Shake => "shake",
            Degradation::Rain => "rain",
            Degradation::Noise => "noise",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSnapshot {
    pub stage: Degradation,
    pub image: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Degraded {
    pub image: Image,
    /// One snapshot per applied stage, in application order.
    pub stages: Vec<StageSnapshot>,
    /// The input recipe with measured quantities and severities written back.
    pub recipe: DegradationRecipe,
}

/// Fog layer used by [`degrade`] for this recipe and rng.
pub fn fog_layer_for(fog: &FogParams, rng: &Rng, height: usize, width: usize) -> Result<FogLayer> {
    let prior = synth_depth_prior(&mut rng.derive(stage::DEPTH), height, width)?;
    Ok(FogLayer::from_prior(fog.airlight, fog.beta, &prior))
}

pub fn degrade(img: &Image, recipe: &DegradationRecipe, rng: &Rng) -> Result<Degraded> {
    recipe.validate()?;
    let (h, w) = img.dims();
    let mut out = recipe.clone();
    let mut current = img.clone();
    let mut stages = Vec::new();
    let mut m = Measurements::default();

    if let Some(fog) = out.fog.as_mut() {
        let layer = fog_layer_for(fog, rng, h, w)?;
        current = apply_fog(&current, &layer)?;
        let t_mean = layer.t_mean();
        fog.t_mean = Some(t_mean);
        m.t_mean = Some(t_mean);
        stages.push(StageSnapshot {
            stage: Degradation::Fog,
            image: current.clone(),
        });
    }
    if let Some(kernel) = out.shake.as_ref() {
        current = convolve2d(&current, kernel.kernel())?;
        m.shake_radius = Some((kernel.r_rms(), kernel.r_max()));
        stages.push(StageSnapshot {
            stage: Degradation::Shake,
            image: current.clone(),
        });
    }
    if let Some(rain) = out.rain.as_mut() {
        let (img, cov) = apply_rain(&current, rain, &mut rng.derive(stage::RAIN))?;
        current = img;
        rain.coverage = Some(cov);
        m.coverage = Some(cov);
        stages.push(StageSnapshot {
            stage: Degradation::Rain,
            image: current.clone(),
        });
    }
    if let Some(noise) = out.noise.as_mut() {
        let (img, sigma_bar) = apply_noise(&current, noise, &mut rng.derive(stage::NOISE))?;
        current = img;
        noise.sigma_bar = Some(sigma_bar);
        m.sigma_bar = Some(sigma_bar);
        stages.push(StageSnapshot {
            stage: Degradation::Noise,
            image: current.clone(),
        });
    }
    out.severity = severity_scores(&m);
    Ok(Degraded {
        image: current,
        stages,
        recipe: out,
    })
}
