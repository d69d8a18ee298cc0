//! Noise-level estimate: an affine noise-level function fitted to robust
//! per-intensity residual scales, averaged over every pixel and channel.
//!
//! Signal-dependent noise makes a single global scale a poor stand-in for the mean
//! sigma, and clipped extremes read low, so scales are measured per intensity bin
//! and only unclipped bins constrain the fit.

use crate::degrade::severity::{clamp_score, noise_raw};
use crate::imgcore::filter::{correlate_plane, separable_plane};
use crate::imgcore::{Image, Kernel, Plane, CHANNELS};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// `1 / Phi^-1(3/4)`: median absolute deviation to Gaussian sigma.
pub const MAD_TO_SIGMA: f64 = 1.482_602_218_505_602;
/// L2 norm of the 3x3 Laplacian stencil below.
const LAPLACIAN_NORM: f64 = 6.0;
const LAPLACIAN: [f64; 9] = [1.0, -2.0, 1.0, -2.0, 4.0, -2.0, 1.0, -2.0, 1.0];
const MEAN_RADIUS: usize = 2;
const BINS: usize = 32;
const MIN_BIN_SAMPLES: usize = 48;
/// Bin scales below this are treated as noise-free.
const ACTIVE_SCALE: f64 = 1e-4;
/// Bins whose mean lies within this many sigmas of 0 or 1 are clipped.
const CLIP_SIGMAS: f64 = 2.0;
/// Narrower spans of active intensities fit a constant instead of a line.
const MIN_SLOPE_SPAN: f64 = 0.1;
const KNEE_STEPS: usize = 256;
/// Samples whose smoothed-signal gradient exceeds `EDGE_FLOOR + EDGE_PER_SIGMA * scale`
/// straddle an edge; noise alone moves the smoothed gradient by about `0.1 * sigma`.
const EDGE_FLOOR: f64 = 0.01;
const EDGE_PER_SIGMA: f64 = 0.4;
const EDGE_PASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseEstimate {
    /// Estimated mean per-channel sigma in normalized units.
    pub sigma: f64,
    pub severity: f64,
    /// Fitted noise-level function `sigma(v) = max(0, slope * v + offset)`.
    pub slope: f64,
    pub offset: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust Gaussian scale of a sample.
pub fn mad_sigma(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    MAD_TO_SIGMA * median(&mut dev)
}

struct Bin {
    intensity: f64,
    scale: f64,
    count: usize,
    /// Scale recovered from the censored raw values; set for clipped bins only.
    censored: Option<f64>,
}

struct Sample {
    value: f64,
    /// Local median intensity; stays on its own side of an edge.
    level: f64,
    /// Normalized Laplacian residual.
    resid: f64,
    /// Gradient magnitude of the local mean.
    edge: f64,
}

fn median3x3(plane: &Plane, y: usize, x: usize) -> f64 {
    let mut v = [0.0; 9];
    for (i, (dy, dx)) in (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dy, dx))).enumerate() {
        v[i] = plane.get_clamped(y as isize + dy, x as isize + dx);
    }
    median(&mut v)
}

/// Every pixel of every channel. Frame pixels count towards the average but, having
/// a replicated-border residual, never towards a scale estimate.
fn samples(img: &Image) -> Vec<Sample> {
    let lap = Kernel::new(3, LAPLACIAN.to_vec()).expect("3x3 stencil");
    let taps = vec![1.0 / (2 * MEAN_RADIUS + 1) as f64; 2 * MEAN_RADIUS + 1];
    let (h, w) = img.dims();
    let mut out = Vec::with_capacity(h * w * CHANNELS);
    for c in 0..CHANNELS {
        let plane = img.channel(c);
        let resid = correlate_plane(&plane, &lap);
        let smooth: Plane = separable_plane(&plane, &taps);
        for y in 0..h {
            for x in 0..w {
                let interior = y > 0 && x > 0 && y + 1 < h && x + 1 < w;
                let edge = if interior {
                    let gx = 0.5 * (smooth.get(y, x + 1) - smooth.get(y, x - 1));
                    let gy = 0.5 * (smooth.get(y + 1, x) - smooth.get(y - 1, x));
                    gx.hypot(gy)
                } else {
                    f64::INFINITY
                };
                out.push(Sample {
                    value: plane.get(y, x),
                    level: median3x3(&plane, y, x),
                    resid: resid.get(y, x) / LAPLACIAN_NORM,
                    edge,
                });
            }
        }
    }
    out
}

/// Residual scale of one bin, iteratively discarding samples that straddle edges.
fn bin_scale(members: &[&Sample]) -> Option<Bin> {
    let mut kept: Vec<&Sample> = members.iter().copied().filter(|s| s.edge.is_finite()).collect();
    if kept.len() < MIN_BIN_SAMPLES {
        return None;
    }
    let mut scale = mad_sigma(&kept.iter().map(|s| s.resid).collect::<Vec<_>>());
    for _ in 0..EDGE_PASSES {
        let limit = EDGE_FLOOR + EDGE_PER_SIGMA * scale;
        let next: Vec<&Sample> = members.iter().copied().filter(|s| s.edge <= limit).collect();
        if next.len() < MIN_BIN_SAMPLES {
            return None;
        }
        kept = next;
        scale = mad_sigma(&kept.iter().map(|s| s.resid).collect::<Vec<_>>());
    }
    let mut bin = Bin {
        intensity: kept.iter().map(|s| s.level).sum::<f64>() / kept.len() as f64,
        scale,
        count: kept.len(),
        censored: None,
    };
    if bin.clipped() {
        bin.censored = censored_scale(&kept.iter().map(|s| s.value).collect::<Vec<_>>());
    }
    Some(bin)
}

/// Scale of a Gaussian clipped to `[0, 1]`, from the clipped fraction and the observed
/// mean on the more clipped side: with `a = level / sigma`, `P(clip) = Phi(-a)` and
/// `E[max(0, x)] = sigma * (a * Phi(a) + phi(a))`.
fn censored_scale(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    let low = values.iter().filter(|&&v| v <= 0.0).count() as f64 / n;
    let high = values.iter().filter(|&&v| v >= 1.0).count() as f64 / n;
    let (frac, mean) = if low >= high {
        (low, values.iter().sum::<f64>() / n)
    } else {
        (high, values.iter().map(|v| 1.0 - v).sum::<f64>() / n)
    };
    if frac <= 0.0 || frac >= 1.0 {
        return None;
    }
    let unit = Normal::standard();
    let a = -unit.inverse_cdf(frac);
    let denom = a * unit.cdf(a) + unit.pdf(a);
    (denom > 0.0).then(|| mean / denom)
}

fn buckets(samples: &[Sample]) -> Vec<Vec<&Sample>> {
    let mut out: Vec<Vec<&Sample>> = vec![Vec::new(); BINS];
    for s in samples {
        let b = ((s.level.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1);
        out[b].push(s);
    }
    out
}

impl Bin {
    fn clipped(&self) -> bool {
        self.intensity - CLIP_SIGMAS * self.scale <= 0.0 || self.intensity + CLIP_SIGMAS * self.scale >= 1.0
    }
}

/// Noise-level function `sigma(v) = max(0, slope * v + offset)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Nlf {
    slope: f64,
    offset: f64,
}

impl Nlf {
    fn at(&self, v: f64) -> f64 {
        (self.slope * v + self.offset).max(0.0)
    }

    fn sse(&self, bins: &[&Bin]) -> f64 {
        bins.iter().map(|b| b.count as f64 * (self.at(b.intensity) - b.scale).powi(2)).sum()
    }
}

/// Count-weighted least squares `scale = slope * intensity + offset`.
fn fit_affine(bins: &[&Bin]) -> Nlf {
    let wsum: f64 = bins.iter().map(|b| b.count as f64).sum();
    let mx = bins.iter().map(|b| b.count as f64 * b.intensity).sum::<f64>() / wsum;
    let my = bins.iter().map(|b| b.count as f64 * b.scale).sum::<f64>() / wsum;
    let lo = bins.iter().map(|b| b.intensity).fold(f64::INFINITY, f64::min);
    let hi = bins.iter().map(|b| b.intensity).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < MIN_SLOPE_SPAN {
        return Nlf { slope: 0.0, offset: my };
    }
    let sxy: f64 = bins
        .iter()
        .map(|b| b.count as f64 * (b.intensity - mx) * (b.scale - my))
        .sum();
    let sxx: f64 = bins.iter().map(|b| b.count as f64 * (b.intensity - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Nlf {
        slope,
        offset: my - slope * mx,
    }
}

/// Best `slope * max(0, v - knee)` over a fine grid of knees spanning the bins.
fn fit_hinge(bins: &[&Bin]) -> Option<Nlf> {
    let lo = bins.iter().map(|b| b.intensity).fold(f64::INFINITY, f64::min);
    let hi = bins.iter().map(|b| b.intensity).fold(f64::NEG_INFINITY, f64::max);
    (0..KNEE_STEPS)
        .filter_map(|i| {
            let knee = lo + (hi - lo) * i as f64 / KNEE_STEPS as f64;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for b in bins {
                let x = (b.intensity - knee).max(0.0);
                sxy += b.count as f64 * x * b.scale;
                sxx += b.count as f64 * x * x;
            }
            (sxx > 0.0).then(|| {
                let slope = (sxy / sxx).max(0.0);
                Nlf {
                    slope,
                    offset: -slope * knee,
                }
            })
        })
        .min_by(|a, b| a.sse(bins).total_cmp(&b.sse(bins)))
}

fn fit_nlf(bins: &[&Bin]) -> Nlf {
    if !bins.iter().any(|b| b.scale > ACTIVE_SCALE) {
        return Nlf { slope: 0.0, offset: 0.0 };
    }
    let unclipped: Vec<&Bin> = bins.iter().copied().filter(|b| !b.clipped()).collect();
    let fit_set: Vec<&Bin> = if unclipped.iter().any(|b| b.scale > ACTIVE_SCALE) {
        unclipped
    } else {
        bins.to_vec()
    };
    let affine = fit_affine(&fit_set);
    match fit_hinge(&fit_set) {
        Some(h) if h.sse(&fit_set) < affine.sse(&fit_set) => h,
        _ => affine,
    }
}

/// Mean sigma over all samples: measured bin scales where a bin is populated and
/// unclipped, the fitted noise-level function elsewhere.
pub fn estimate_noise(img: &Image) -> NoiseEstimate {
    let samples = samples(img);
    let groups = buckets(&samples);
    let bins: Vec<Option<Bin>> = groups
        .iter()
        .map(|m| if m.len() >= MIN_BIN_SAMPLES { bin_scale(m) } else { None })
        .collect();
    let nlf = fit_nlf(&bins.iter().flatten().collect::<Vec<_>>());
    let total: f64 = groups
        .iter()
        .zip(&bins)
        .map(|(members, bin)| match bin {
            Some(b) if !b.clipped() => members.len() as f64 * b.scale,
            Some(Bin { censored: Some(c), .. }) => members.len() as f64 * c,
            _ => members.iter().map(|s| nlf.at(s.level)).sum(),
        })
        .sum();
    let sigma = if samples.is_empty() { 0.0 } else { total / samples.len() as f64 };
    NoiseEstimate {
        sigma,
        severity: clamp_score(noise_raw(sigma)),
        slope: nlf.slope,
        offset: nlf.offset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Rng;

    #[test]
    fn smooth_gradient_reads_noiseless() {
        let img = Image::from_fn(64, 64, |y, x| [y as f64 / 64.0, x as f64 / 64.0, 0.5]).unwrap();
        assert!(estimate_noise(&img).sigma < 0.005);
    }

    #[test]
    fn gaussian_noise_on_gray() {
        let mut rng = Rng::new(21, 0);
        let img = Image::from_fn(64, 64, |_, _| [0.0; 3].map(|_| 0.5 + 0.03 * rng.normal())).unwrap();
        let s = estimate_noise(&img).sigma;
        assert!((0.024..=0.036).contains(&s), "sigma {s}");
    }

    #[test]
    fn signal_dependent_slope_recovered() {
        let mut rng = Rng::new(4, 0);
        let img = Image::from_fn(96, 96, |_, x| {
            let v = 0.1 + 0.8 * x as f64 / 96.0;
            [0.0; 3].map(|_| v + (0.04 * v) * rng.normal())
        })
        .unwrap();
        let e = estimate_noise(&img);
        assert!((e.slope - 0.04).abs() < 0.01, "{e:?}");
    }

    #[test]
    fn mad_of_symmetric_sample() {
        assert!((mad_sigma(&[-1.0, 0.0, 1.0]) - MAD_TO_SIGMA).abs() < 1e-15);
    }
}
