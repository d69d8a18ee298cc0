//! Rain-streak estimate from an oriented ridge detector bank.

use std::f64::consts::PI;

use crate::degrade::severity::{clamp_score, rain_raw};
use crate::imgcore::{Image, Plane};

use super::noise::estimate_noise;

pub const ORIENTATIONS: usize = 8;
/// Samples on each side of the centre along the streak axis.
const HALF_LENGTH: isize = 4;
/// Perpendicular distance of the two flanking lines.
const FLANK_OFFSET: f64 = 2.0;
/// Minimum ridge contrast (luma units) on a noise-free image.
pub const RIDGE_THRESHOLD: f64 = 0.03;
/// Threshold increase per unit of estimated channel noise sigma; the ridge response of
/// pure noise has a spread of about `0.31 * sigma`.
pub const NOISE_MARGIN: f64 = 1.0;
/// Detections are widened across the streak by this many pixels to cover its halo.
const HALO: isize = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RainEstimate {
    pub coverage: f64,
    /// Streak angle from vertical in `[-pi/2, pi/2)`, positive leaning right at the bottom.
    pub slant: f64,
    pub severity: f64,
}

pub fn orientation(k: usize) -> f64 {
    -0.5 * PI + k as f64 * PI / ORIENTATIONS as f64
}

fn line_offsets(slant: f64, shift: f64) -> Vec<(isize, isize)> {
    let (s, c) = slant.sin_cos();
    // axis (dy, dx) = (cos, sin); normal (dy, dx) = (-sin, cos)
    (-HALF_LENGTH..=HALF_LENGTH)
        .map(|i| {
            let t = i as f64;
            let dy = t * c - shift * s;
            let dx = t * s + shift * c;
            (dy.round() as isize, dx.round() as isize)
        })
        .collect()
}

fn line_mean(luma: &Plane, y: usize, x: usize, offsets: &[(isize, isize)]) -> f64 {
    let sum: f64 = offsets
        .iter()
        .map(|&(dy, dx)| luma.get_clamped(y as isize + dy, x as isize + dx))
        .sum();
    sum / offsets.len() as f64
}

/// Per-pixel `(ridge, valley)` contrast for one slant: how much brighter (darker) the
/// centre line is than both flanking lines.
pub fn line_contrast(luma: &Plane, slant: f64) -> (Plane, Plane) {
    let centre = line_offsets(slant, 0.0);
    let left = line_offsets(slant, -FLANK_OFFSET);
    let right = line_offsets(slant, FLANK_OFFSET);
    let (h, w) = luma.dims();
    let mut ridge = Plane::filled(h, w, 0.0).expect("nonzero dims");
    let mut valley = ridge.clone();
    for y in 0..h {
        for x in 0..w {
            let c = line_mean(luma, y, x, &centre);
            let (dl, dr) = (c - line_mean(luma, y, x, &left), c - line_mean(luma, y, x, &right));
            ridge.set(y, x, dl.min(dr));
            valley.set(y, x, (-dl).min(-dr));
        }
    }
    (ridge, valley)
}

/// Ridge response per orientation, discounted by any valley across it: a streak lies on
/// smooth background, while corners and crossings are saddles.
pub fn streak_responses(luma: &Plane) -> Vec<Plane> {
    let contrast: Vec<(Plane, Plane)> = (0..ORIENTATIONS).map(|k| line_contrast(luma, orientation(k))).collect();
    (0..ORIENTATIONS)
        .map(|k| {
            let (ridge, _) = &contrast[k];
            let (_, valley) = &contrast[(k + ORIENTATIONS / 2) % ORIENTATIONS];
            let (h, w) = ridge.dims();
            Plane::from_fn(h, w, |y, x| ridge.get(y, x) - valley.get(y, x).max(0.0)).expect("dims preserved")
        })
        .collect()
}

pub fn estimate_rain(img: &Image) -> RainEstimate {
    estimate_rain_with_noise(img, estimate_noise(img).sigma)
}

/// As [`estimate_rain`], with the detection threshold raised for a known noise level.
pub fn estimate_rain_with_noise(img: &Image, noise_sigma: f64) -> RainEstimate {
    let luma = img.luma();
    let threshold = RIDGE_THRESHOLD + NOISE_MARGIN * noise_sigma.max(0.0);
    let mut best: Option<(f64, Plane)> = None;
    let mut best_energy = f64::NEG_INFINITY;
    for (k, resp) in streak_responses(&luma).into_iter().enumerate() {
        let slant = orientation(k);
        // squared response favours the orientation whose footprint is thinnest
        let energy: f64 = resp.data().iter().map(|r| r.max(0.0).powi(2)).sum();
        if energy > best_energy {
            best_energy = energy;
            best = Some((slant, resp));
        }
    }
    let (slant, resp) = best.expect("at least one orientation");
    let coverage = footprint(&resp, slant, threshold);
    RainEstimate {
        coverage,
        slant: if coverage > 0.0 { slant } else { 0.0 },
        severity: clamp_score(rain_raw(coverage)),
    }
}

/// Fraction of pixels within `HALO` (across the streak) of a response above `threshold`.
fn footprint(resp: &Plane, slant: f64, threshold: f64) -> f64 {
    let (h, w) = resp.dims();
    let (s, c) = slant.sin_cos();
    let mut mask = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if resp.get(y, x) <= threshold {
                continue;
            }
            for d in -HALO..=HALO {
                let yy = y as isize + (-(d as f64) * s).round() as isize;
                let xx = x as isize + (d as f64 * c).round() as isize;
                if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                    mask[yy as usize * w + xx as usize] = true;
                }
            }
        }
    }
    mask.iter().filter(|&&m| m).count() as f64 / (h * w) as f64
}
