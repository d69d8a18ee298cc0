//! Motion-blur estimate from the anisotropy of the luma gradient structure tensor.

use std::f64::consts::PI;

use crate::degrade::severity::{clamp_score, shake_raw};
use crate::imgcore::{Image, Plane};

/// Kernel radius the severity scale is normalized against.
pub const R_MAX: f64 = 16.0;
/// Gradient energy per pixel below which the image carries no blur evidence.
const MIN_ENERGY: f64 = 1e-10;

/// `(eigenvalue ratio, RMS kernel radius)`, ratio strictly decreasing.
///
/// Frozen from a sweep of generator kernels over procedural scenes.
pub const LENGTH_CURVE: [(f64, f64); 10] = [
    (1.00, 0.0),
    (0.78, 0.0),
    (0.65, 1.0),
    (0.57, 2.0),
    (0.48, 3.2),
    (0.40, 4.3),
    (0.33, 5.3),
    (0.25, 6.4),
    (0.20, 7.0),
    (0.00, 16.0),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurEstimate {
    /// Blur direction in `[0, pi)`, from +x towards +y.
    pub direction: f64,
    /// Estimated RMS radius of the blur kernel in pixels.
    pub length: f64,
    /// Minor over major eigenvalue of the structure tensor.
    pub ratio: f64,
    pub severity: f64,
}

/// Summed `[gx*gx, gx*gy, gy*gy]` over interior central differences.
pub fn structure_tensor(luma: &Plane) -> [f64; 3] {
    let (h, w) = luma.dims();
    let mut t = [0.0; 3];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let gx = 0.5 * (luma.get(y, x + 1) - luma.get(y, x - 1));
            let gy = 0.5 * (luma.get(y + 1, x) - luma.get(y - 1, x));
            t[0] += gx * gx;
            t[1] += gx * gy;
            t[2] += gy * gy;
        }
    }
    t
}

/// Eigenvalues `(major, minor)` and the minor eigenvector angle in `[0, pi)`.
pub fn tensor_eigen(t: [f64; 3]) -> (f64, f64, f64) {
    let [xx, xy, yy] = t;
    let half_tr = 0.5 * (xx + yy);
    let disc = (0.25 * (xx - yy).powi(2) + xy * xy).sqrt();
    let major_angle = 0.5 * (2.0 * xy).atan2(xx - yy);
    let minor = (major_angle + 0.5 * PI).rem_euclid(PI);
    (half_tr + disc, (half_tr - disc).max(0.0), minor)
}

pub fn length_from_ratio(ratio: f64) -> f64 {
    let r = ratio.clamp(0.0, 1.0);
    for pair in LENGTH_CURVE.windows(2) {
        let ((r0, l0), (r1, l1)) = (pair[0], pair[1]);
        if r <= r0 && r >= r1 {
            let f = (r0 - r) / (r0 - r1);
            return l0 + f * (l1 - l0);
        }
    }
    0.0
}

pub fn estimate_blur(img: &Image) -> BlurEstimate {
    let t = structure_tensor(&img.luma());
    let (major, minor, direction) = tensor_eigen(t);
    if major <= MIN_ENERGY * img.pixel_count() as f64 {
        return BlurEstimate {
            direction: 0.0,
            length: 0.0,
            ratio: 1.0,
            severity: 1.0,
        };
    }
    let ratio = minor / major;
    let length = length_from_ratio(ratio);
    BlurEstimate {
        direction: if direction >= PI { 0.0 } else { direction },
        length,
        ratio,
        severity: clamp_score(shake_raw(length, R_MAX)),
    }
}
