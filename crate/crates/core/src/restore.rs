//! Parametric restoration: a fixed chain of classical inverse operators and a
//! Gaussian policy over their parameters.
//!
//! Operators run in reverse degradation order: derain, denoise, sharpen, defog.

use serde::{Deserialize, Serialize};

use crate::degrade::severity::T_FLOOR;
use crate::degrade::Degradation;
use crate::diagnose::DiagnosticReport;
use crate::error::{Error, Result};
use crate::imgcore::filter::{
    gaussian_taps, gaussian_taps_dsigma, horizontal_median, map_channels, separable_plane, separable_plane_xy,
};
use crate::imgcore::{Image, Plane, Rng};

/// Length of the flat parameter vector.
pub const PARAM_DIM: usize = 7;
/// Names of the flat vector entries, in order.
pub const PARAM_NAMES: [&str; PARAM_DIM] = [
    "defog_t",
    "defog_a_r",
    "defog_a_g",
    "defog_a_b",
    "denoise_strength",
    "sharpen_amount",
    "derain_strength",
];

pub const DENOISE_MAX: f64 = 3.0;
pub const SHARPEN_MAX: f64 = 2.0;
/// Taps cover 3 sigma at the largest strength; a fixed radius keeps the
/// output smooth in the strength.
pub const DENOISE_RADIUS: usize = 9;
pub const UNSHARP_SIGMA: f64 = 1.0;
pub const UNSHARP_RADIUS: usize = 3;
/// Horizontal median half-width; generator streaks lean at most 0.35 rad off vertical.
pub const DERAIN_RADIUS: usize = 3;

pub const PARAM_LOWER: [f64; PARAM_DIM] = [T_FLOOR, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
pub const PARAM_UPPER: [f64; PARAM_DIM] = [1.0, 1.0, 1.0, 1.0, DENOISE_MAX, SHARPEN_MAX, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationParams {
    pub defog_t: f64,
    pub defog_a: [f64; 3],
    /// Gaussian sigma in pixels.
    pub denoise_strength: f64,
    /// Unsharp-mask gain.
    pub sharpen_amount: f64,
    /// Blend weight towards the horizontal median.
    pub derain_strength: f64,
}

impl RestorationParams {
    /// The identity restoration.
    pub const NEUTRAL: Self = Self {
        defog_t: 1.0,
        defog_a: [1.0; 3],
        denoise_strength: 0.0,
        sharpen_amount: 0.0,
        derain_strength: 0.0,
    };

    pub fn to_vec(&self) -> [f64; PARAM_DIM] {
        let a = self.defog_a;
        [
            self.defog_t,
            a[0],
            a[1],
            a[2],
            self.denoise_strength,
            self.sharpen_amount,
            self.derain_strength,
        ]
    }

    pub fn from_vec(v: [f64; PARAM_DIM]) -> Self {
        Self {
            defog_t: v[0],
            defog_a: [v[1], v[2], v[3]],
            denoise_strength: v[4],
            sharpen_amount: v[5],
            derain_strength: v[6],
        }
    }

    /// Clamps every field into range; NaN maps to the neutral value.
    pub fn project(&self) -> Self {
        let neutral = Self::NEUTRAL.to_vec();
        let mut v = self.to_vec();
        for i in 0..PARAM_DIM {
            v[i] = if v[i].is_nan() { neutral[i] } else { v[i].clamp(PARAM_LOWER[i], PARAM_UPPER[i]) };
        }
        Self::from_vec(v)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.to_vec().into_iter().enumerate() {
            if !(PARAM_LOWER[i]..=PARAM_UPPER[i]).contains(&v) {
                return Err(Error::param(
                    PARAM_NAMES[i],
                    format!("{v} outside [{}, {}]", PARAM_LOWER[i], PARAM_UPPER[i]),
                ));
            }
        }
        Ok(())
    }
}

/// Inverts `I = J t + A (1 - t)` per pixel and clamps to `[0, 1]`.
pub fn defog(img: &Image, transmission: &Plane, airlight: [f64; 3]) -> Result<Image> {
    let (h, w) = img.dims();
    transmission.ensure_dims(h, w)?;
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let t = transmission.get(y, x).max(T_FLOOR);
            for (c, &a) in airlight.iter().enumerate() {
                out.set(y, x, c, ((img.get(y, x, c) - (1.0 - t) * a) / t).clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

fn blend(a: &Image, b: &Image, weight: f64) -> Image {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + weight * (y - x)).collect();
    Image::from_vec(a.height(), a.width(), data).expect("dims preserved")
}

/// Applies the operator chain; out-of-range parameters are projected first.
pub fn restore(img: &Image, params: &RestorationParams) -> Image {
    let p = params.project();
    let mut cur = img.clone();
    if p.derain_strength > 0.0 {
        let med = map_channels(&cur, |c| horizontal_median(c, DERAIN_RADIUS));
        cur = blend(&cur, &med, p.derain_strength);
    }
    if p.denoise_strength > 0.0 {
        let taps = gaussian_taps(p.denoise_strength, DENOISE_RADIUS);
        cur = map_channels(&cur, |c| separable_plane(c, &taps));
    }
    if p.sharpen_amount > 0.0 {
        let taps = gaussian_taps(UNSHARP_SIGMA, UNSHARP_RADIUS);
        let low = map_channels(&cur, |c| separable_plane(c, &taps));
        // x + g (x - low) is a blend with weight -g
        cur = blend(&cur, &low, -p.sharpen_amount);
    }
    let t = p.defog_t;
    let a = p.defog_a;
    for px in cur.data_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = ((px[c] - (1.0 - t) * a[c]) / t).clamp(0.0, 1.0);
        }
    }
    cur
}

fn combine(a: &Image, wa: f64, b: &Image, wb: f64) -> Image {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| wa * x + wb * y).collect();
    Image::from_vec(a.height(), a.width(), data).expect("dims preserved")
}

/// Squared error of [`restore`] at the unprojected parameter vector `raw`, and
/// its gradient with respect to `raw`.
///
/// Derivatives are carried forward through the chain as tangent images. The
/// projection and the output clamp contribute zero slope on their flat parts,
/// so the gradient is exact wherever the error is differentiable.
pub fn mse_gradient(img: &Image, clean: &Image, raw: &[f64; PARAM_DIM]) -> Result<(f64, [f64; PARAM_DIM])> {
    img.ensure_same_shape(clean)?;
    let p = RestorationParams::from_vec(*raw).project().to_vec();
    let active: [bool; PARAM_DIM] = std::array::from_fn(|i| raw[i] > PARAM_LOWER[i] && raw[i] < PARAM_UPPER[i]);
    let (t_idx, denoise, sharpen, derain) = (0, 4, 5, 6);
    // Tangents of the running image for the pre-defog parameters.
    let mut tan: [Option<Image>; PARAM_DIM] = Default::default();
    let mut cur = img.clone();

    let s = p[derain];
    if s > 0.0 {
        let med = map_channels(&cur, |c| horizontal_median(c, DERAIN_RADIUS));
        if active[derain] {
            tan[derain] = Some(combine(&med, 1.0, &cur, -1.0));
        }
        cur = blend(&cur, &med, s);
    }

    let sigma = p[denoise];
    if sigma > 0.0 {
        let taps = gaussian_taps(sigma, DENOISE_RADIUS);
        for t in tan.iter_mut().flatten() {
            *t = map_channels(t, |c| separable_plane(c, &taps));
        }
        if active[denoise] {
            let dtaps = gaussian_taps_dsigma(sigma, DENOISE_RADIUS);
            tan[denoise] = Some(map_channels(&cur, |c| {
                let a = separable_plane_xy(c, &dtaps, &taps);
                let b = separable_plane_xy(c, &taps, &dtaps);
                let (h, w) = a.dims();
                Plane::from_vec(h, w, a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()).expect("dims preserved")
            }));
        }
        cur = map_channels(&cur, |c| separable_plane(c, &taps));
    }

    let g = p[sharpen];
    if g > 0.0 {
        let taps = gaussian_taps(UNSHARP_SIGMA, UNSHARP_RADIUS);
        for t in tan.iter_mut().flatten() {
            let low = map_channels(t, |c| separable_plane(c, &taps));
            *t = blend(t, &low, -g);
        }
        let low = map_channels(&cur, |c| separable_plane(c, &taps));
        if active[sharpen] {
            tan[sharpen] = Some(combine(&cur, 1.0, &low, -1.0));
        }
        cur = blend(&cur, &low, -g);
    }

    // Defog: v = (x - (1 - t) a) / t, clamped to [0, 1].
    let t = p[t_idx];
    let a = [p[1], p[2], p[3]];
    let upstream: Vec<(usize, &[f64])> = tan
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.as_ref().map(|img| (k, img.data())))
        .collect();
    let mut sse = 0.0;
    let mut grad = [0.0; PARAM_DIM];
    for (idx, (&x, &target)) in cur.data().iter().zip(clean.data()).enumerate() {
        let c = idx % 3;
        let v = (x - (1.0 - t) * a[c]) / t;
        let y = v.clamp(0.0, 1.0);
        let r = y - target;
        sse += r * r;
        if v > 0.0 && v < 1.0 {
            grad[t_idx] -= r * (x - a[c]) / (t * t);
            grad[1 + c] += r * (1.0 - 1.0 / t);
            for &(k, data) in &upstream {
                grad[k] += r * data[idx] / t;
            }
        }
    }
    let m = cur.data().len() as f64;
    for (i, gi) in grad.iter_mut().enumerate() {
        *gi = if active[i] { 2.0 * *gi / m } else { 0.0 };
    }
    Ok((sse / m, grad))
}

/// Diagonal Gaussian over restoration parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationPolicy {
    pub mean: RestorationParams,
    pub exploration_std: [f64; PARAM_DIM],
}

impl RestorationPolicy {
    pub fn new(mean: RestorationParams, exploration_std: [f64; PARAM_DIM]) -> Result<Self> {
        let policy = Self { mean, exploration_std };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        for (i, &s) in self.exploration_std.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param(PARAM_NAMES[i], format!("exploration std {s} must be positive")));
            }
        }
        Ok(())
    }

    /// `mean + std * eps`, before projection.
    pub fn perturb(&self, eps: &[f64; PARAM_DIM]) -> [f64; PARAM_DIM] {
        let mu = self.mean.to_vec();
        std::array::from_fn(|i| mu[i] + self.exploration_std[i] * eps[i])
    }

    pub fn candidate(&self, eps: &[f64; PARAM_DIM]) -> RestorationParams {
        RestorationParams::from_vec(self.perturb(eps)).project()
    }
}

/// How report readings map to initial restoration strengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub exploration_std: [f64; PARAM_DIM],
    /// Denoise sigma per unit of estimated noise sigma.
    pub denoise_per_sigma: f64,
    /// Sharpen gain per pixel of estimated blur length.
    pub sharpen_per_length: f64,
    /// Derain blend per unit of estimated streak coverage.
    pub derain_per_coverage: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            exploration_std: [0.05, 0.03, 0.03, 0.03, 0.2, 0.1, 0.05],
            denoise_per_sigma: 25.0,
            sharpen_per_length: 0.25,
            derain_per_coverage: 3.0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, &s) in self.exploration_std.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param(PARAM_NAMES[i], format!("exploration std {s} must be positive")));
            }
        }
        for (name, v) in [
            ("denoise_per_sigma", self.denoise_per_sigma),
            ("sharpen_per_length", self.sharpen_per_length),
            ("derain_per_coverage", self.derain_per_coverage),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

/// Seeds the policy mean from the report; channels marked absent stay neutral.
pub fn init_policy(report: &DiagnosticReport, config: &PolicyConfig) -> RestorationPolicy {
    let mut mean = RestorationParams::NEUTRAL;
    if report.is_present(Degradation::Fog) {
        mean.defog_t = report.fog.t_mean;
        mean.defog_a = report.fog.airlight;
    }
    if report.is_present(Degradation::Shake) {
        mean.sharpen_amount = config.sharpen_per_length * report.blur.length;
    }
    if report.is_present(Degradation::Rain) {
        mean.derain_strength = config.derain_per_coverage * report.rain.coverage;
    }
    if report.is_present(Degradation::Noise) {
        mean.denoise_strength = config.denoise_per_sigma * report.noise_sigma;
    }
    RestorationPolicy {
        mean: mean.project(),
        exploration_std: config.exploration_std,
    }
}

/// Standard normal draws, one row per candidate.
pub fn sample_eps(rng: &mut Rng, n: usize) -> Vec<[f64; PARAM_DIM]> {
    (0..n).map(|_| std::array::from_fn(|_| rng.normal())).collect()
}

pub fn sample_candidates(policy: &RestorationPolicy, rng: &mut Rng, n: usize) -> Result<Vec<RestorationParams>> {
    if n < 2 {
        return Err(Error::param("group", format!("a group needs at least 2 candidates, got {n}")));
    }
    Ok(sample_eps(rng, n).iter().map(|e| policy.candidate(e)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{apply_fog, FogLayer};
    use crate::imgcore::psnr;

    fn mse_at(img: &Image, clean: &Image, raw: &[f64; PARAM_DIM]) -> f64 {
        restore(img, &RestorationParams::from_vec(*raw)).mse(clean).unwrap()
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let clean = crate::scene::indexed_scene(4, 1, 40, 40).unwrap();
        let foggy = apply_fog(&clean, &FogLayer::uniform([0.85, 0.9, 0.95], 0.55, 40, 40).unwrap()).unwrap();
        let raw = [0.6, 0.8, 0.85, 0.9, 1.2, 0.7, 0.4];
        let (mse, grad) = mse_gradient(&foggy, &clean, &raw).unwrap();
        assert_eq!(mse, mse_at(&foggy, &clean, &raw));
        let h = 1e-6;
        for k in 0..PARAM_DIM {
            let (mut hi, mut lo) = (raw, raw);
            hi[k] += h;
            lo[k] -= h;
            let fd = (mse_at(&foggy, &clean, &hi) - mse_at(&foggy, &clean, &lo)) / (2.0 * h);
            assert!((grad[k] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "{} analytic {} fd {fd}", PARAM_NAMES[k], grad[k]);
        }
    }

    #[test]
    fn clamped_parameters_have_no_slope() {
        let clean = crate::scene::indexed_scene(4, 2, 32, 32).unwrap();
        let raw = [1.3, 0.5, 0.5, 0.5, -0.2, 0.0, 0.3];
        let (mse, grad) = mse_gradient(&clean, &clean, &raw).unwrap();
        assert_eq!(mse, mse_at(&clean, &clean, &raw));
        for k in [0, 4, 5] {
            assert_eq!(grad[k], 0.0, "{}", PARAM_NAMES[k]);
        }
    }
    use crate::scene::synth_scene;

    fn scene() -> Image {
        synth_scene(&mut Rng::new(3, 0), 48, 48).unwrap()
    }

    #[test]
    fn neutral_is_identity() {
        let img = scene();
        assert_eq!(restore(&img, &RestorationParams::NEUTRAL), img);
    }

    #[test]
    fn exact_uniform_fog_inverts() {
        let clean = scene();
        let fogged = apply_fog(&clean, &FogLayer::uniform([1.0; 3], 0.5, 48, 48).unwrap()).unwrap();
        let exact = RestorationParams {
            defog_t: 0.5,
            ..RestorationParams::NEUTRAL
        };
        let wrong = RestorationParams { defog_t: 0.9, ..exact };
        let good = psnr(&restore(&fogged, &exact), &clean).unwrap();
        assert!(good >= 40.0);
        assert!(psnr(&restore(&fogged, &wrong), &clean).unwrap() < good);
    }

    #[test]
    fn psnr_peaks_at_true_transmission() {
        let clean = scene();
        let fogged = apply_fog(&clean, &FogLayer::uniform([0.9, 0.9, 0.95], 0.4, 48, 48).unwrap()).unwrap();
        let score = |t: f64| {
            let p = RestorationParams {
                defog_t: t,
                defog_a: [0.9, 0.9, 0.95],
                ..RestorationParams::NEUTRAL
            };
            psnr(&restore(&fogged, &p), &clean).unwrap()
        };
        let best = score(0.4);
        for k in 1..=19 {
            let t = k as f64 * 0.05;
            if (t - 0.4).abs() > 1e-9 {
                assert!(score(t) < best, "t = {t}");
            }
        }
    }

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let p = RestorationParams::from_vec([0.0, -1.0, 0.5, 2.0, 9.0, -3.0, f64::NAN]).project();
        assert_eq!(p.to_vec(), [T_FLOOR, 0.0, 0.5, 1.0, DENOISE_MAX, 0.0, 0.0]);
        assert_eq!(p.project(), p);
        p.validate().unwrap();
    }

    #[test]
    fn clean_report_seeds_neutral() {
        let policy = init_policy(&DiagnosticReport::clean(), &PolicyConfig::default());
        assert_eq!(policy.mean, RestorationParams::NEUTRAL);
    }

    #[test]
    fn fog_report_seeds_transmission() {
        let mut r = DiagnosticReport::clean();
        r.severity[0] = 53.1;
        r.presence[0] = true;
        r.fog.t_mean = 0.5;
        r.fog.airlight = [0.8, 0.8, 0.9];
        let p = init_policy(&r, &PolicyConfig::default());
        assert_eq!(p.mean.defog_t, 0.5);
        assert_eq!(p.mean.defog_a, [0.8, 0.8, 0.9]);
        assert_eq!(p, init_policy(&r, &PolicyConfig::default()));
    }

    #[test]
    fn groups_need_two_candidates() {
        let policy = init_policy(&DiagnosticReport::clean(), &PolicyConfig::default());
        assert!(sample_candidates(&policy, &mut Rng::new(1, 1), 1).is_err());
        let a = sample_candidates(&policy, &mut Rng::new(1, 1), 4).unwrap();
        let b = sample_candidates(&policy, &mut Rng::new(1, 1), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vanishing_std_collapses_to_mean() {
        let mean = RestorationParams {
            defog_t: 0.6,
            denoise_strength: 1.0,
            sharpen_amount: 0.5,
            derain_strength: 0.3,
            ..RestorationParams::NEUTRAL
        };
        let mean = RestorationParams { defog_a: [0.7; 3], ..mean };
        let policy = RestorationPolicy::new(mean, [1e-300; PARAM_DIM]).unwrap();
        for c in sample_candidates(&policy, &mut Rng::new(2, 2), 5).unwrap() {
            assert_eq!(c, mean);
        }
    }

    #[test]
    fn unprojected_samples_center_on_mean() {
        let policy = init_policy(&DiagnosticReport::clean(), &PolicyConfig::default());
        let n = 10_000;
        let eps = sample_eps(&mut Rng::new(9, 4), n);
        let mu = policy.mean.to_vec();
        for i in 0..PARAM_DIM {
            let mean = eps.iter().map(|e| policy.perturb(e)[i]).sum::<f64>() / n as f64;
            let se = policy.exploration_std[i] / (n as f64).sqrt();
            assert!((mean - mu[i]).abs() < 3.0 * se, "dim {i}");
        }
    }

    #[test]
    fn zero_std_is_rejected() {
        let mut std = PolicyConfig::default().exploration_std;
        std[3] = 0.0;
        assert!(RestorationPolicy::new(RestorationParams::NEUTRAL, std).is_err());
    }
}
