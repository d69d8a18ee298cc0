//! Camera-shake kernels rasterized from a Gaussian-weighted random-walk trajectory.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{Kernel, Rng};

const STATS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShakeConfig {
    pub min_steps: u32,
    pub max_steps: u32,
    /// Kernel canvas is `2 * canvas_radius + 1` pixels square; also `r_max`.
    pub canvas_radius: usize,
    /// Std-dev (radians) of the per-step heading change.
    pub heading_jitter: f64,
    /// Test hook: every step moves along this heading (radians), no jitter.
    pub forced_heading: Option<f64>,
    /// Test hook: fixed trajectory length instead of sampling one.
    pub forced_steps: Option<u32>,
}

impl Default for ShakeConfig {
    fn default() -> Self {
        Self {
            min_steps: 8,
            max_steps: 32,
            canvas_radius: 16,
            heading_jitter: 0.5,
            forced_heading: None,
            forced_steps: None,
        }
    }
}

impl ShakeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return Err(Error::param(
                "shake.min_steps",
                format!("need 1 <= min_steps <= max_steps, got {}..{}", self.min_steps, self.max_steps),
            ));
        }
        if self.canvas_radius < 2 {
            return Err(Error::param("shake.canvas_radius", "must be at least 2"));
        }
        if !(self.heading_jitter >= 0.0) {
            return Err(Error::param("shake.heading_jitter", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Statistics derived from kernel weights alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelStats {
    /// Dominant direction in `[0, pi)`, from +x towards +y (image rows grow downward).
    pub direction: f64,
    /// Square root of the largest eigenvalue of the weighted second-moment matrix.
    pub effective_length: f64,
    /// L2 norm of the weights.
    pub energy: f64,
    /// Weighted RMS distance from the kernel centroid.
    pub r_rms: f64,
}

pub fn kernel_stats(kernel: &Kernel) -> KernelStats {
    let side = kernel.side();
    let total = kernel.sum();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..side {
        for j in 0..side {
            let w = kernel.at(i, j);
            cx += w * j as f64;
            cy += w * i as f64;
        }
    }
    cx /= total;
    cy /= total;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for i in 0..side {
        for j in 0..side {
            let w = kernel.at(i, j);
            let (dx, dy) = (j as f64 - cx, i as f64 - cy);
            sxx += w * dx * dx;
            syy += w * dy * dy;
            sxy += w * dx * dy;
        }
    }
    sxx /= total;
    syy /= total;
    sxy /= total;

    let half_diff = 0.5 * (sxx - syy);
    let lambda_max = 0.5 * (sxx + syy) + (half_diff * half_diff + sxy * sxy).sqrt();
    let mut direction = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if direction < 0.0 {
        direction += PI;
    }
    if direction >= PI {
        direction -= PI;
    }
    KernelStats {
        direction,
        effective_length: lambda_max.max(0.0).sqrt(),
        energy: kernel.weights().iter().map(|w| w * w).sum::<f64>().sqrt(),
        r_rms: (sxx + syy).max(0.0).sqrt(),
    }
}

/// A normalized motion-blur kernel plus its derived statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlurKernelRepr", into = "BlurKernelRepr")]
pub struct BlurKernel {
    kernel: Kernel,
    stats: KernelStats,
    r_max: f64,
    clipped: bool,
}

impl BlurKernel {
    pub fn new(kernel: Kernel, r_max: f64, clipped: bool) -> Result<Self> {
        if !kernel.is_normalized() {
            return Err(Error::Kernel(format!("blur kernel sums to {}", kernel.sum())));
        }
        if kernel.weights().iter().any(|&w| w < 0.0) {
            return Err(Error::Kernel("blur kernel has negative weights".into()));
        }
        if !(r_max > 0.0) {
            return Err(Error::param("r_max", "must be positive"));
        }
        let stats = kernel_stats(&kernel);
        if stats.r_rms > r_max {
            return Err(Error::Invariant(format!(
                "kernel r_rms {} exceeds r_max {r_max}",
                stats.r_rms
            )));
        }
        Ok(Self {
            kernel,
            stats,
            r_max,
            clipped,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn stats(&self) -> KernelStats {
        self.stats
    }

    pub fn direction(&self) -> f64 {
        self.stats.direction
    }

    pub fn effective_length(&self) -> f64 {
        self.stats.effective_length
    }

    pub fn energy(&self) -> f64 {
        self.stats.energy
    }

    pub fn r_rms(&self) -> f64 {
        self.stats.r_rms
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// The trajectory left the canvas and was truncated.
    pub fn clipped(&self) -> bool {
        self.clipped
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlurKernelRepr {
    side: usize,
    weights: Vec<f64>,
    direction: f64,
    effective_length: f64,
    energy: f64,
    r_rms: f64,
    r_max: f64,
    clipped: bool,
}

impl From<BlurKernel> for BlurKernelRepr {
    fn from(k: BlurKernel) -> Self {
        Self {
            side: k.kernel.side(),
            weights: k.kernel.weights().to_vec(),
            direction: k.stats.direction,
            effective_length: k.stats.effective_length,
            energy: k.stats.energy,
            r_rms: k.stats.r_rms,
            r_max: k.r_max,
            clipped: k.clipped,
        }
    }
}

impl TryFrom<BlurKernelRepr> for BlurKernel {
    type Error = Error;

    fn try_from(r: BlurKernelRepr) -> Result<Self> {
        let k = BlurKernel::new(Kernel::new(r.side, r.weights)?, r.r_max, r.clipped)?;
        let s = k.stats;
        let stored = [r.direction, r.effective_length, r.energy, r.r_rms];
        let derived = [s.direction, s.effective_length, s.energy, s.r_rms];
        if stored.iter().zip(&derived).any(|(a, b)| (a - b).abs() > STATS_TOL) {
            return Err(Error::Invariant(format!(
                "stored kernel statistics {stored:?} disagree with weights {derived:?}"
            )));
        }
        // keep the stored values so serialization round-trips bit-exactly
        Ok(BlurKernel {
            stats: KernelStats {
                direction: r.direction,
                effective_length: r.effective_length,
                energy: r.energy,
                r_rms: r.r_rms,
            },
            ..k
        })
    }
}

pub fn make_shake_kernel(rng: &mut Rng, config: &ShakeConfig) -> Result<BlurKernel> {
    config.validate()?;
    let steps = config
        .forced_steps
        .unwrap_or_else(|| rng.range_inclusive(config.min_steps, config.max_steps))
        .max(1) as usize;

    let mut heading = config.forced_heading.unwrap_or_else(|| rng.range(0.0, TAU));
    let mut points = Vec::with_capacity(steps);
    let (mut px, mut py) = (0.0f64, 0.0f64);
    points.push((px, py));
    for _ in 1..steps {
        if config.forced_heading.is_none() {
            heading += config.heading_jitter * rng.normal();
        }
        px += heading.cos();
        py += heading.sin();
        if config.forced_heading.is_some() {
            // axis-aligned hooks must stay exactly on the axis
            py = (py * 1e12).round() / 1e12;
            px = (px * 1e12).round() / 1e12;
        }
        points.push((px, py));
    }

    // temporal weighting emphasizing the middle of the exposure
    let mid = (steps - 1) as f64 / 2.0;
    let sigma_t = steps as f64 / 4.0;
    let weights: Vec<f64> = (0..steps)
        .map(|i| {
            let d = i as f64 - mid;
            (-d * d / (2.0 * sigma_t * sigma_t)).exp()
        })
        .collect();
    let wsum: f64 = weights.iter().sum();
    let cx = points.iter().zip(&weights).map(|(p, w)| p.0 * w).sum::<f64>() / wsum;
    let cy = points.iter().zip(&weights).map(|(p, w)| p.1 * w).sum::<f64>() / wsum;

    let radius = config.canvas_radius;
    let side = 2 * radius + 1;
    // bilinear taps of a point within this distance stay inside the r_max disc
    let reach = radius as f64 - 1.5;
    let mut grid = vec![0.0; side * side];
    let mut clipped = false;
    for (&(x, y), &w) in points.iter().zip(&weights) {
        let (dx, dy) = (x - cx, y - cy);
        if (dx * dx + dy * dy).sqrt() > reach {
            clipped = true;
            continue;
        }
        let (gx, gy) = (radius as f64 + dx, radius as f64 + dy);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        for (oy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (ox, wx) in [(0, 1.0 - fx), (1, fx)] {
                let v = w * wy * wx;
                if v > 0.0 {
                    grid[(y0 + oy) * side + x0 + ox] += v;
                }
            }
        }
    }
    let total: f64 = grid.iter().sum();
    if total <= 0.0 {
        // unreachable in practice: the trajectory centroid always lies on the canvas
        grid[radius * side + radius] = 1.0;
    } else {
        grid.iter_mut().for_each(|v| *v /= total);
    }
    BlurKernel::new(Kernel::new(side, grid)?, radius as f64, clipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_is_impulse() {
        let cfg = ShakeConfig {
            forced_steps: Some(1),
            ..Default::default()
        };
        let k = make_shake_kernel(&mut Rng::new(1, 1), &cfg).unwrap();
        assert!(k.r_rms() < 1e-9);
        assert_eq!(k.kernel().at(16, 16), 1.0);
        assert!((super::super::severity::shake_raw(k.r_rms(), k.r_max()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn horizontal_walk_direction_is_zero() {
        let cfg = ShakeConfig {
            forced_heading: Some(0.0),
            forced_steps: Some(12),
            ..Default::default()
        };
        let k = make_shake_kernel(&mut Rng::new(1, 1), &cfg).unwrap();
        let d = k.direction();
        assert!(d.min(PI - d) < 1e-6, "direction {d}");
        assert!(k.effective_length() > 1.0);
    }

    #[test]
    fn vertical_walk_direction_is_half_pi() {
        let cfg = ShakeConfig {
            forced_heading: Some(PI / 2.0),
            forced_steps: Some(12),
            ..Default::default()
        };
        let k = make_shake_kernel(&mut Rng::new(1, 1), &cfg).unwrap();
        assert!((k.direction() - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn random_kernels_are_normalized_and_bounded() {
        let cfg = ShakeConfig::default();
        let mut rng = Rng::new(77, 3);
        for _ in 0..200 {
            let k = make_shake_kernel(&mut rng, &cfg).unwrap();
            assert!((k.kernel().sum() - 1.0).abs() < 1e-9);
            assert!(k.r_rms() <= k.r_max());
            assert!(k.kernel().weights().iter().all(|&w| w >= 0.0));
            let re = kernel_stats(k.kernel());
            assert!((re.direction - k.direction()).abs() < 1e-6);
            assert!((re.energy - k.energy()).abs() < 1e-6);
        }
    }

    #[test]
    fn stats_of_tampered_record_rejected() {
        let k = make_shake_kernel(&mut Rng::new(2, 2), &ShakeConfig::default()).unwrap();
        let mut v = serde_json::to_value(&k).unwrap();
        v["r_rms"] = serde_json::json!(k.r_rms() + 0.5);
        assert!(serde_json::from_value::<BlurKernel>(v).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = ShakeConfig {
            min_steps: 10,
            max_steps: 5,
            ..Default::default()
        };
        assert!(make_shake_kernel(&mut Rng::new(0, 0), &cfg).is_err());
    }
}
