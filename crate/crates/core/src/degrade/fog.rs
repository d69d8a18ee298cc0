//! Atmospheric scattering: `I = J t + A (1 - t)` with a depth-driven transmission map.

use crate::error::{Error, Result};
use crate::imgcore::{Image, Plane, Rng};

use super::severity::T_FLOOR;

const PRIOR_LO: f64 = 0.2;
const PRIOR_HI: f64 = 1.0;
const RAMP_WEIGHT: f64 = 0.7;
const NOISE_CELLS: usize = 4;

/// A materialized fog: atmospheric light plus a per-pixel transmission map.
#[derive(Clone, Debug, PartialEq)]
pub struct FogLayer {
    pub airlight: [f64; 3],
    transmission: Plane,
}

impl FogLayer {
    /// `t = clamp(t0^beta, 0.05, 1)`.
    pub fn from_prior(airlight: [f64; 3], beta: f64, prior: &Plane) -> Self {
        Self {
            airlight,
            transmission: prior.map(|t0| t0.powf(beta).clamp(T_FLOOR, 1.0)),
        }
    }

    /// Spatially constant transmission.
    pub fn uniform(airlight: [f64; 3], t: f64, height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            airlight,
            transmission: Plane::filled(height, width, t.clamp(T_FLOOR, 1.0))?,
        })
    }

    pub fn transmission(&self) -> &Plane {
        &self.transmission
    }

    pub fn t_mean(&self) -> f64 {
        self.transmission.mean()
    }
}

pub fn apply_fog(img: &Image, fog: &FogLayer) -> Result<Image> {
    let (h, w) = img.dims();
    fog.transmission.ensure_dims(h, w)?;
    let a = fog.airlight;
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let t = fog.transmission.get(y, x);
            for (c, &ac) in a.iter().enumerate() {
                let j = img.get(y, x, c);
                out.set(y, x, c, (j * t + ac * (1.0 - t)).clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

/// Synthetic relative-depth prior in `[0.2, 1]`: a top-far/bottom-near ramp blended
/// 70/30 with smooth value noise, then min-max rescaled.
pub fn synth_depth_prior(rng: &mut Rng, height: usize, width: usize) -> Result<Plane> {
    if height < 8 || width < 8 {
        return Err(Error::Dimensions {
            height,
            width,
            reason: "depth prior needs at least 8x8",
        });
    }
    let n = NOISE_CELLS + 1;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.uniform()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);

    let raw = Plane::from_fn(height, width, |y, x| {
        let ramp = y as f64 / (height - 1) as f64;
        let gy = y as f64 / (height - 1) as f64 * NOISE_CELLS as f64;
        let gx = x as f64 / (width - 1) as f64 * NOISE_CELLS as f64;
        let (iy, ix) = ((gy as usize).min(NOISE_CELLS - 1), (gx as usize).min(NOISE_CELLS - 1));
        let (fy, fx) = (smooth(gy - iy as f64), smooth(gx - ix as f64));
        let at = |r: usize, c: usize| lattice[r * n + c];
        let top = at(iy, ix) * (1.0 - fx) + at(iy, ix + 1) * fx;
        let bottom = at(iy + 1, ix) * (1.0 - fx) + at(iy + 1, ix + 1) * fx;
        let noise = top * (1.0 - fy) + bottom * fy;
        RAMP_WEIGHT * ramp + (1.0 - RAMP_WEIGHT) * noise
    })?;
    Ok(rescale(&raw, PRIOR_LO, PRIOR_HI))
}

/// Converts an external depth map (larger = farther) into a transmission prior in `[0.2, 1]`.
pub fn prior_from_depth(depth: &Plane) -> Plane {
    rescale(&depth.map(|d| -d), PRIOR_LO, PRIOR_HI)
}

fn rescale(p: &Plane, lo: f64, hi: f64) -> Plane {
    let (mn, mx) = p.min_max();
    if mx - mn <= f64::EPSILON {
        return p.map(|_| hi);
    }
    p.map(|v| (lo + (v - mn) / (mx - mn) * (hi - lo)).clamp(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |y, x| [y as f64 / h as f64, x as f64 / w as f64, 0.5]).unwrap()
    }

    #[test]
    fn zero_fog_is_identity() {
        let img = gradient(10, 12);
        let fog = FogLayer::uniform([0.9, 0.8, 0.7], 1.0, 10, 12).unwrap();
        assert_eq!(apply_fog(&img, &fog).unwrap(), img);
    }

    #[test]
    fn half_transmission_on_gray() {
        let img = Image::filled(8, 8, [0.5; 3]).unwrap();
        let fog = FogLayer::uniform([1.0; 3], 0.5, 8, 8).unwrap();
        let out = apply_fog(&img, &fog).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn floor_transmission_bounds() {
        let img = gradient(9, 9);
        let fog = FogLayer::uniform([0.9; 3], 0.05, 9, 9).unwrap();
        let out = apply_fog(&img, &fog).unwrap();
        // J in [0,1] gives I in [0.855, 0.905]
        assert!(out.data().iter().all(|&v| (v - 0.855).abs() <= 0.0475 + 1e-12));
    }

    #[test]
    fn size_mismatch_rejected() {
        let img = gradient(9, 9);
        let fog = FogLayer::uniform([0.9; 3], 0.5, 9, 8).unwrap();
        assert!(apply_fog(&img, &fog).is_err());
    }

    #[test]
    fn depth_prior_contract() {
        let p = synth_depth_prior(&mut Rng::new(5, 0), 32, 40).unwrap();
        let (lo, hi) = p.min_max();
        assert!(lo >= 0.2 && hi <= 1.0);
        assert!((lo - 0.2).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert!(p.row_mean(31) > p.row_mean(0));
        let again = synth_depth_prior(&mut Rng::new(5, 0), 32, 40).unwrap();
        assert_eq!(p, again);
        assert!(synth_depth_prior(&mut Rng::new(5, 0), 7, 40).is_err());
    }

    #[test]
    fn transmission_clamped() {
        let prior = Plane::from_fn(8, 8, |y, _| 0.2 + 0.1 * y as f64).unwrap();
        let fog = FogLayer::from_prior([0.8; 3], 3.0, &prior);
        let (lo, hi) = fog.transmission().min_max();
        assert!(lo >= 0.05 && hi <= 1.0);
        assert_eq!(lo, 0.05);
    }

    #[test]
    fn external_depth_prior_inverts_depth() {
        let depth = Plane::from_fn(8, 8, |y, _| 10.0 - y as f64).unwrap();
        let p = prior_from_depth(&depth);
        assert!(p.row_mean(7) > p.row_mean(0));
        assert_eq!(p.min_max(), (0.2, 1.0));
    }
}
