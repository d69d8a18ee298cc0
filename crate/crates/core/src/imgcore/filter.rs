//! Spatial filtering. All filters replicate edge pixels at the boundary.

use crate::error::{Error, Result};

use super::image::{Image, Plane, CHANNELS};

const NORMALIZATION_TOL: f64 = 1e-9;

/// Odd-sided square grid of filter weights, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    side: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        if side == 0 || side % 2 == 0 {
            return Err(Error::Kernel(format!(
                "side length must be odd and positive, got {side}"
            )));
        }
        if weights.len() != side * side {
            return Err(Error::Kernel(format!(
                "expected {} weights for a {side}x{side} kernel, got {}",
                side * side,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Kernel("weights must be finite".into()));
        }
        Ok(Self { side, weights })
    }

    pub fn identity() -> Self {
        Self {
            side: 1,
            weights: vec![1.0],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.side + col]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() <= NORMALIZATION_TOL
    }
}

/// Convolves every channel with a normalized kernel. Output is clamped to `[0, 1]`.
pub fn convolve2d(img: &Image, kernel: &Kernel) -> Result<Image> {
    if !kernel.is_normalized() {
        return Err(Error::Kernel(format!(
            "weights must sum to 1 (within {NORMALIZATION_TOL:e}), got {}",
            kernel.sum()
        )));
    }
    let (h, w) = img.dims();
    let r = kernel.radius() as isize;
    let taps: Vec<(isize, isize, f64)> = (0..kernel.side())
        .flat_map(|i| (0..kernel.side()).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let wgt = kernel.at(i, j);
            (wgt != 0.0).then_some((i as isize - r, j as isize - r, wgt))
        })
        .collect();
    if taps.len() == 1 && taps[0] == (0, 0, 1.0) {
        return Ok(img.clone().clamped());
    }

    let src = img.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = [0.0; 3];
            for &(dy, dx, wgt) in &taps {
                // correlation with the flipped kernel
                let sy = (y - dy).clamp(0, h as isize - 1) as usize;
                let sx = (x - dx).clamp(0, w as isize - 1) as usize;
                let base = (sy * w + sx) * CHANNELS;
                acc[0] += wgt * src[base];
                acc[1] += wgt * src[base + 1];
                acc[2] += wgt * src[base + 2];
            }
            let base = (y as usize * w + x as usize) * CHANNELS;
            for c in 0..CHANNELS {
                out[base + c] = acc[c].clamp(0.0, 1.0);
            }
        }
    }
    Image::from_vec(h, w, out)
}

/// Correlates a plane with arbitrary (not necessarily normalized) weights. No clamping.
pub fn correlate_plane(plane: &Plane, kernel: &Kernel) -> Plane {
    let (h, w) = plane.dims();
    let r = kernel.radius() as isize;
    let side = kernel.side();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for i in 0..side {
                for j in 0..side {
                    let wgt = kernel.at(i, j);
                    if wgt != 0.0 {
                        acc += wgt * plane.get_clamped(y + i as isize - r, x + j as isize - r);
                    }
                }
            }
            out.push(acc);
        }
    }
    Plane::from_vec(h, w, out).expect("dims preserved")
}

/// Normalized 1D Gaussian taps with a fixed radius.
pub fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    if sigma <= 0.0 {
        let mut t = vec![0.0; 2 * radius + 1];
        t[radius] = 1.0;
        return t;
    }
    let mut t: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    t
}

/// Derivative of [`gaussian_taps`] with respect to sigma; zero at `sigma <= 0`,
/// where the normalized taps are flat to every order.
pub fn gaussian_taps_dsigma(sigma: f64, radius: usize) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![0.0; 2 * radius + 1];
    }
    let g = gaussian_taps(sigma, radius);
    let d2 = |i: usize| (i as f64 - radius as f64).powi(2);
    let mean_d2: f64 = g.iter().enumerate().map(|(i, v)| v * d2(i)).sum();
    let s3 = sigma.powi(3);
    g.iter().enumerate().map(|(i, v)| v * (d2(i) - mean_d2) / s3).collect()
}

/// Separable filtering of a plane with the same 1D taps on both axes.
pub fn separable_plane(plane: &Plane, taps: &[f64]) -> Plane {
    separable_plane_xy(plane, taps, taps)
}

/// Separable filtering: `row_taps` along x, then `col_taps` along y, with edge clamping.
pub fn separable_plane_xy(plane: &Plane, row_taps: &[f64], col_taps: &[f64]) -> Plane {
    let (h, w) = plane.dims();
    let rx = (row_taps.len() / 2) as isize;
    let ry = (col_taps.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w as isize {
            tmp[y * w + x as usize] = row_taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * plane.get_clamped(y as isize, x + i as isize - rx))
                .sum();
        }
    }
    let tmp = Plane::from_vec(h, w, tmp).expect("dims preserved");
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w {
            out[y as usize * w + x] = col_taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * tmp.get_clamped(y + i as isize - ry, x as isize))
                .sum();
        }
    }
    Plane::from_vec(h, w, out).expect("dims preserved")
}

pub fn gaussian_blur_plane(plane: &Plane, sigma: f64, radius: usize) -> Plane {
    separable_plane(plane, &gaussian_taps(sigma, radius))
}

/// Per-channel Gaussian blur; no clamping (a convex combination stays in range).
pub fn gaussian_blur(img: &Image, sigma: f64, radius: usize) -> Image {
    let taps = gaussian_taps(sigma, radius);
    map_channels(img, |p| separable_plane(p, &taps))
}

pub fn map_channels(img: &Image, f: impl Fn(&Plane) -> Plane) -> Image {
    let r = f(&img.channel(0));
    let g = f(&img.channel(1));
    let b = f(&img.channel(2));
    Image::from_channels([&r, &g, &b]).expect("dims preserved")
}

/// Square min filter of side `2 * radius + 1`, computed separably.
pub fn min_filter(plane: &Plane, radius: usize) -> Plane {
    let (h, w) = plane.dims();
    let r = radius as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w as isize {
            let mut m = f64::INFINITY;
            for dx in -r..=r {
                m = m.min(plane.get_clamped(y as isize, x + dx));
            }
            tmp[y * w + x as usize] = m;
        }
    }
    let tmp = Plane::from_vec(h, w, tmp).expect("dims preserved");
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w {
            let mut m = f64::INFINITY;
            for dy in -r..=r {
                m = m.min(tmp.get_clamped(y + dy, x as isize));
            }
            out[y as usize * w + x] = m;
        }
    }
    Plane::from_vec(h, w, out).expect("dims preserved")
}

/// Median over a horizontal window of `2 * radius + 1` pixels.
pub fn horizontal_median(plane: &Plane, radius: usize) -> Plane {
    let (h, w) = plane.dims();
    let r = radius as isize;
    let mut buf = Vec::with_capacity(2 * radius + 1);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            buf.clear();
            buf.extend((-r..=r).map(|dx| plane.get_clamped(y, x + dx)));
            buf.sort_by(|a, b| a.total_cmp(b));
            out.push(buf[radius]);
        }
    }
    Plane::from_vec(h, w, out).expect("dims preserved")
}
