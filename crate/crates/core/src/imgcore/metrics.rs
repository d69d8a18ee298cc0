//! Full-reference quality metrics.

use crate::error::{Error, Result};

use super::filter::gaussian_taps;
use super::image::{Image, Plane};

/// Returned when the two images are (numerically) identical.
pub const PSNR_CAP_DB: f64 = 99.0;
const PSNR_MSE_FLOOR: f64 = 1e-12;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// PSNR in dB with peak value 1.0.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(a.mse(b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < PSNR_MSE_FLOOR {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Mean SSIM over all fully-contained 11x11 Gaussian windows of the luma channel.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (h, w) = a.dims();
    if h.min(w) < SSIM_WINDOW {
        return Err(Error::Dimensions {
            height: h,
            width: w,
            reason: "SSIM needs at least an 11x11 image",
        });
    }
    Ok(ssim_plane(&a.luma(), &b.luma()))
}

fn ssim_plane(x: &Plane, y: &Plane) -> f64 {
    let taps = gaussian_taps(SSIM_SIGMA, SSIM_WINDOW / 2);
    let xx = product(x, x);
    let yy = product(y, y);
    let xy = product(x, y);
    let mu_x = valid_filter(x, &taps);
    let mu_y = valid_filter(y, &taps);
    let e_xx = valid_filter(&xx, &taps);
    let e_yy = valid_filter(&yy, &taps);
    let e_xy = valid_filter(&xy, &taps);

    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2);
        total += num / den;
    }
    total / n as f64
}

fn product(a: &Plane, b: &Plane) -> Plane {
    let data = a.data().iter().zip(b.data()).map(|(p, q)| p * q).collect();
    Plane::from_vec(a.height(), a.width(), data).expect("same dims")
}

/// Separable filtering restricted to windows that fit inside the plane.
fn valid_filter(p: &Plane, taps: &[f64]) -> Vec<f64> {
    let (h, w) = p.dims();
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| taps[i] * p.get(y, x + i)).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Rng;

    fn noise_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = Rng::new(seed, 0);
        Image::from_fn(h, w, |_, _| [rng.uniform(), rng.uniform(), rng.uniform()]).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = Image::filled(4, 4, [0.2; 3]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(0.001) - 30.0).abs() < 1e-12);
        // constant offset of 0.1 -> MSE 0.01
        let b = Image::filled(4, 4, [0.3; 3]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_rejects_shape_mismatch() {
        let a = Image::filled(4, 4, [0.2; 3]).unwrap();
        let b = Image::filled(4, 5, [0.2; 3]).unwrap();
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn ssim_self_is_exactly_one() {
        let a = noise_image(3, 20, 24);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_black_vs_white() {
        let a = Image::filled(16, 16, [0.0; 3]).unwrap();
        let b = Image::filled(16, 16, [1.0; 3]).unwrap();
        // closed form on constant patches: C1 / (1 + C1)
        let v = ssim(&a, &b).unwrap();
        assert!((v - SSIM_C1 / (1.0 + SSIM_C1)).abs() < 1e-12);
        assert!(v < 0.01);
    }

    #[test]
    fn ssim_small_image_rejected() {
        let a = Image::filled(10, 40, [0.5; 3]).unwrap();
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn ssim_independent_noise_golden() {
        let a = noise_image(11, 32, 32);
        let b = noise_image(12, 32, 32);
        let v = ssim(&a, &b).unwrap();
        let v2 = ssim(&b, &a).unwrap();
        assert!((v - v2).abs() < 1e-9);
        // frozen from the reference run
        assert!((v - SSIM_NOISE_GOLDEN).abs() < 1e-12, "ssim = {v:.17}");
    }

    const SSIM_NOISE_GOLDEN: f64 = 0.119_729_851_700_625_61;
}
