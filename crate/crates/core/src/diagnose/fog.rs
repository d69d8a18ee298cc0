//! Dark-channel fog estimate: atmospheric light and mean transmission.

use crate::degrade::severity::{clamp_score, fog_raw, T_FLOOR};
use crate::imgcore::filter::min_filter;
use crate::imgcore::{Image, Plane};

/// 15x15 neighbourhood.
pub const PATCH_RADIUS: usize = 7;
/// Fraction of brightest dark-channel pixels averaged into the atmospheric light.
pub const TOP_FRACTION: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FogEstimate {
    pub airlight: [f64; 3],
    pub t_mean: f64,
    pub severity: f64,
}

fn min_channel(img: &Image, scale: [f64; 3]) -> Plane {
    let data = img
        .pixels()
        .map(|p| (p[0] / scale[0]).min(p[1] / scale[1]).min(p[2] / scale[2]))
        .collect();
    Plane::from_vec(img.height(), img.width(), data).expect("dims preserved")
}

pub fn dark_channel(img: &Image) -> Plane {
    min_filter(&min_channel(img, [1.0; 3]), PATCH_RADIUS)
}

pub fn estimate_airlight(img: &Image, dark: &Plane) -> [f64; 3] {
    let n = dark.data().len();
    let take = ((n as f64 * TOP_FRACTION).ceil() as usize).clamp(1, n);
    let w = img.width();
    let brightness = |i: usize| img.pixel(i / w, i % w).iter().sum::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    // ties go to the brighter pixel, then to the lower index
    order.sort_by(|&a, &b| {
        dark.data()[b]
            .total_cmp(&dark.data()[a])
            .then(brightness(b).total_cmp(&brightness(a)))
            .then(a.cmp(&b))
    });
    let mut a = [0.0; 3];
    for &i in &order[..take] {
        let p = img.pixel(i / w, i % w);
        for c in 0..3 {
            a[c] += p[c];
        }
    }
    a.map(|v| v / take as f64)
}

pub fn transmission_map(img: &Image, airlight: [f64; 3]) -> Plane {
    let scale = airlight.map(|a| a.max(1e-6));
    min_filter(&min_channel(img, scale), PATCH_RADIUS).map(|d| (1.0 - d).clamp(0.0, 1.0))
}

pub fn estimate_fog(img: &Image) -> FogEstimate {
    let dark = dark_channel(img);
    let airlight = estimate_airlight(img, &dark);
    let t_mean = transmission_map(img, airlight).mean().clamp(T_FLOOR, 1.0);
    FogEstimate {
        airlight,
        t_mean,
        severity: clamp_score(fog_raw(t_mean)),
    }
}
