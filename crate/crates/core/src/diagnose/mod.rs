//! Analytic diagnosis: presence, severity and parameters of each degradation.

pub mod blur;
pub mod fog;
pub mod noise;
pub mod rain;
pub mod report;

use crate::error::{Error, Result};
use crate::imgcore::Image;

pub use blur::{estimate_blur, BlurEstimate};
pub use fog::{estimate_fog, FogEstimate};
pub use noise::{estimate_noise, NoiseEstimate};
pub use rain::{estimate_rain, estimate_rain_with_noise, RainEstimate};
pub use report::{
    parse_report, render_report, BlurReading, DiagnosticReport, FogReading, RainReading, SceneDescription,
    PRESENCE_THRESHOLD, REPORT_SCHEMA,
};

pub const MIN_SIDE: usize = 32;

pub fn diagnose(img: &Image) -> Result<DiagnosticReport> {
    let (h, w) = img.dims();
    if h.min(w) < MIN_SIDE {
        return Err(Error::Dimensions {
            height: h,
            width: w,
            reason: "diagnosis needs at least 32x32",
        });
    }
    let fog = estimate_fog(img);
    let blur = estimate_blur(img);
    let noise = estimate_noise(img);
    let rain = estimate_rain_with_noise(img, noise.sigma);
    Ok(DiagnosticReport::new(
        [fog.severity, blur.severity, rain.severity, noise.severity],
        FogReading {
            airlight: fog.airlight,
            t_mean: fog.t_mean,
        },
        BlurReading {
            direction: blur.direction,
            length: blur.length,
        },
        RainReading {
            coverage: rain.coverage,
            slant: rain.slant,
        },
        noise.sigma,
    ))
}
