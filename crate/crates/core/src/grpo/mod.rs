//! Group relative policy optimization over restoration parameters.
//!
//! The policy proxy is a softmax over negative candidate MSEs, rewards are
//! diagnosed severity reductions, and the loss is `-(1/N) sum A_k log P_k`.

pub mod checkpoint;
pub mod train;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::diagnose::{diagnose, DiagnosticReport};
use crate::error::{Error, Result};
use crate::imgcore::{psnr_from_mse, ssim, Image};
use crate::restore::{mse_gradient, restore, RestorationParams, RestorationPolicy, PARAM_DIM};

pub use checkpoint::{parse_checkpoint, read_checkpoint, render_checkpoint, write_checkpoint, CHECKPOINT_SCHEMA};
pub use train::{train, train_step, StepLog, TrainConfig, TrainSample, TrainState};

/// Reward spread below which a group carries no learning signal.
pub const ADVANTAGE_EPS: f64 = 1e-12;
/// Lower bound of the adaptive temperature.
pub const TAU_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauRule {
    /// `tau = max(mean(mse), 1e-6)` per group.
    Adaptive,
    Fixed(f64),
}

impl TauRule {
    pub fn resolve(&self, mse: &[f64]) -> f64 {
        match *self {
            TauRule::Adaptive => (mse.iter().sum::<f64>() / mse.len().max(1) as f64).max(TAU_FLOOR),
            TauRule::Fixed(t) => t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TauRule::Fixed(t) if !(t > 0.0 && t.is_finite()) => {
                Err(Error::param("tau", format!("{t} must be positive and finite")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TauRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauRule::Adaptive => f.write_str("adaptive"),
            TauRule::Fixed(t) => write!(f, "{t:?}"),
        }
    }
}

impl FromStr for TauRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(TauRule::Adaptive);
        }
        let t: f64 = s
            .parse()
            .map_err(|_| Error::param("tau", format!("`{s}` is neither `adaptive` nor a number")))?;
        let rule = TauRule::Fixed(t);
        rule.validate()?;
        Ok(rule)
    }
}

/// `log softmax(-mse / tau)`, stabilized by subtracting the max logit.
pub fn fidelity_log_probs(mse: &[f64], tau: f64) -> Result<Vec<f64>> {
    if mse.len() < 2 {
        return Err(Error::param("group", format!("need at least 2 candidates, got {}", mse.len())));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param("tau", format!("{tau} must be positive and finite")));
    }
    if let Some(e) = mse.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::param("mse", format!("{e} is not a finite nonnegative energy")));
    }
    let logits: Vec<f64> = mse.iter().map(|e| -e / tau).collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logits.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|l| l - lse).collect())
}

/// Total severity reduction of the candidate relative to the input.
pub fn diagnostic_reward(input: &DiagnosticReport, candidate: &DiagnosticReport) -> f64 {
    input.severity.iter().zip(&candidate.severity).map(|(a, b)| a - b).sum()
}

/// `(r - mean) / std` with the population std; all zeros for a flat group.
pub fn advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > ADVANTAGE_EPS) {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// Brute-force Gibbs weights `exp(-E / (2 sigma^2))`, normalized by their sum.
pub fn ebm_oracle_check(mse: &[f64], sigma: f64) -> Vec<f64> {
    let w: Vec<f64> = mse.iter().map(|e| (-e / (2.0 * sigma * sigma)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

fn loss_of(advantages: &[f64], log_probs: &[f64]) -> f64 {
    let n = advantages.len() as f64;
    -advantages.iter().zip(log_probs).map(|(a, l)| a * l).sum::<f64>() / n
}

/// One rollout: candidates, their restorations and every per-candidate score.
#[derive(Clone, Debug)]
pub struct GrpoGroup {
    pub candidates: Vec<RestorationParams>,
    pub restored: Vec<Image>,
    pub mse: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub tau: f64,
    /// Draws behind the candidates, kept for the gradient.
    pub eps: Vec<[f64; PARAM_DIM]>,
    pub ssim: Vec<f64>,
}

impl GrpoGroup {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards)
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(&self.mse.iter().map(|&e| psnr_from_mse(e)).collect::<Vec<_>>())
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(&self.ssim)
    }

    /// Checks the normalization and advantage invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.restored.len(),
            self.mse.len(),
            self.log_probs.len(),
            self.rewards.len(),
            self.advantages.len(),
            self.eps.len(),
        ];
        if n < 2 || lens.iter().any(|&l| l != n) {
            return Err(Error::Invariant(format!("group of {n} candidates has field lengths {lens:?}")));
        }
        let total: f64 = self.log_probs.iter().map(|l| l.exp()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invariant(format!("probabilities sum to {total}")));
        }
        if self.log_probs.iter().any(|&l| l > 0.0) {
            return Err(Error::Invariant("positive log probability".into()));
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn grpo_loss(group: &GrpoGroup) -> f64 {
    loss_of(&group.advantages, &group.log_probs)
}

/// Everything the loss holds fixed while the policy mean moves.
#[derive(Clone, Copy, Debug)]
pub struct GroupInputs<'a> {
    pub degraded: &'a Image,
    pub clean: &'a Image,
    pub eps: &'a [[f64; PARAM_DIM]],
    pub advantages: &'a [f64],
    pub tau: f64,
}

fn candidate_mse(mu: &[f64; PARAM_DIM], std: &[f64; PARAM_DIM], inputs: &GroupInputs) -> Result<Vec<f64>> {
    inputs
        .eps
        .par_iter()
        .map(|e| {
            let phi = RestorationParams::from_vec(std::array::from_fn(|i| mu[i] + std[i] * e[i])).project();
            restore(inputs.degraded, &phi).mse(inputs.clean)
        })
        .collect()
}

/// Loss as a function of the (unprojected) mean vector.
pub fn loss_at(mu: &[f64; PARAM_DIM], std: &[f64; PARAM_DIM], inputs: &GroupInputs) -> Result<f64> {
    let mse = candidate_mse(mu, std, inputs)?;
    let loss = loss_of(inputs.advantages, &fidelity_log_probs(&mse, inputs.tau)?);
    if !loss.is_finite() {
        return Err(Error::Invariant(format!("non-finite loss at {mu:?}")));
    }
    Ok(loss)
}

/// Gradient of the loss in the policy mean.
///
/// `dL/dE_k = (A_k - P_k sum_j A_j) / (N tau)`, chained with each candidate's
/// analytic error gradient. Advantages and `tau` are constants of the group.
pub fn loss_gradient(policy: &RestorationPolicy, inputs: &GroupInputs) -> Result<[f64; PARAM_DIM]> {
    let mut grad = [0.0; PARAM_DIM];
    if inputs.advantages.iter().all(|&a| a == 0.0) {
        return Ok(grad);
    }
    let mu = policy.mean.to_vec();
    let std = policy.exploration_std;
    let per_candidate: Vec<(f64, [f64; PARAM_DIM])> = inputs
        .eps
        .par_iter()
        .map(|e| mse_gradient(inputs.degraded, inputs.clean, &std::array::from_fn(|i| mu[i] + std[i] * e[i])))
        .collect::<Result<_>>()?;
    let mse: Vec<f64> = per_candidate.iter().map(|c| c.0).collect();
    let log_probs = fidelity_log_probs(&mse, inputs.tau)?;
    let n = mse.len() as f64;
    let total_adv: f64 = inputs.advantages.iter().sum();
    for ((a, lp), (_, g)) in inputs.advantages.iter().zip(&log_probs).zip(&per_candidate) {
        let weight = (a - lp.exp() * total_adv) / (n * inputs.tau);
        for i in 0..PARAM_DIM {
            grad[i] += weight * g[i];
        }
    }
    if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::Invariant(format!("non-finite gradient component {g}")));
    }
    Ok(grad)
}

/// Samples, restores, scores and diagnoses one group.
pub fn rollout(
    policy: &RestorationPolicy,
    eps: Vec<[f64; PARAM_DIM]>,
    degraded: &Image,
    clean: &Image,
    input_report: &DiagnosticReport,
    tau: TauRule,
) -> Result<GrpoGroup> {
    if eps.len() < 2 {
        return Err(Error::param("group", format!("need at least 2 candidates, got {}", eps.len())));
    }
    let candidates: Vec<RestorationParams> = eps.iter().map(|e| policy.candidate(e)).collect();
    let scored: Vec<(Image, f64, f64, f64)> = candidates
        .par_iter()
        .map(|p| {
            let out = restore(degraded, p);
            let mse = out.mse(clean)?;
            let s = ssim(&out, clean)?;
            let reward = diagnostic_reward(input_report, &diagnose(&out)?);
            Ok((out, mse, s, reward))
        })
        .collect::<Result<_>>()?;
    let mut restored = Vec::with_capacity(scored.len());
    let (mut mse, mut ssim_v, mut rewards) = (vec![], vec![], vec![]);
    for (img, e, s, r) in scored {
        restored.push(img);
        mse.push(e);
        ssim_v.push(s);
        rewards.push(r);
    }
    let tau = tau.resolve(&mse);
    let log_probs = fidelity_log_probs(&mse, tau)?;
    let advantages = advantages(&rewards);
    Ok(GrpoGroup {
        candidates,
        restored,
        mse,
        log_probs,
        rewards,
        advantages,
        tau,
        eps,
        ssim: ssim_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{apply_fog, FogLayer};
    use crate::imgcore::Rng;
    use crate::restore::{init_policy, sample_eps, PolicyConfig};
    use crate::scene::synth_scene;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn equal_energies_are_uniform() {
        let lp = fidelity_log_probs(&[0.3, 0.3, 0.3], 0.7).unwrap();
        for l in lp {
            assert!(close(l, (1.0f64 / 3.0).ln(), 1e-15));
        }
    }

    #[test]
    fn ln3_gap_gives_three_to_one() {
        let lp = fidelity_log_probs(&[0.0, 3f64.ln()], 1.0).unwrap();
        assert!(close(lp[0].exp(), 0.75, 1e-15));
        assert!(close(lp[1].exp(), 0.25, 1e-15));
    }

    #[test]
    fn hot_softmax_is_flat() {
        let e = [0.1, 0.5, 0.9, 0.2];
        let lp = fidelity_log_probs(&e, 1e6 * 0.9).unwrap();
        for l in lp {
            assert!(close(l.exp(), 0.25, 1e-6));
        }
    }

    #[test]
    fn log_probs_reject_bad_inputs() {
        assert!(fidelity_log_probs(&[0.1], 1.0).is_err());
        assert!(fidelity_log_probs(&[0.1, f64::NAN], 1.0).is_err());
        assert!(fidelity_log_probs(&[0.1, 0.2], 0.0).is_err());
        assert!(fidelity_log_probs(&[0.1, -0.2], 1.0).is_err());
    }

    #[test]
    fn extreme_energies_stay_normalized() {
        let lp = fidelity_log_probs(&[0.0, 1e6, 5e5], 1e-3).unwrap();
        assert_eq!(lp[0], 0.0);
        assert!(lp[1].is_finite() && lp[2].is_finite());
    }

    #[test]
    fn reward_is_total_severity_drop() {
        let mut input = DiagnosticReport::clean();
        input.severity = [60.0, 1.0, 1.0, 40.0];
        let mut cand = DiagnosticReport::clean();
        cand.severity = [20.0, 1.0, 1.0, 10.0];
        assert_eq!(diagnostic_reward(&input, &cand), 70.0);
        assert_eq!(diagnostic_reward(&input, &input), 0.0);
        assert!(diagnostic_reward(&cand, &input) < 0.0);
    }

    #[test]
    fn advantage_examples() {
        let a = advantages(&[10.0, 20.0, 30.0]);
        assert!(close(a[0], -1.2247, 1e-4) && a[1] == 0.0 && close(a[2], 1.2247, 1e-4));
        assert_eq!(advantages(&[0.0, 1.0]), vec![-1.0, 1.0]);
        assert_eq!(advantages(&[4.0; 5]), vec![0.0; 5]);
    }

    fn group_with(advantages: Vec<f64>, log_probs: Vec<f64>) -> GrpoGroup {
        let n = advantages.len();
        GrpoGroup {
            candidates: vec![RestorationParams::NEUTRAL; n],
            restored: vec![],
            mse: vec![0.0; n],
            log_probs,
            rewards: vec![0.0; n],
            advantages,
            tau: 1.0,
            eps: vec![[0.0; PARAM_DIM]; n],
            ssim: vec![1.0; n],
        }
    }

    #[test]
    fn loss_examples() {
        let g = group_with(vec![-1.0, 1.0], vec![0.75f64.ln(), 0.25f64.ln()]);
        // -(1/2)(-ln 0.75 + ln 0.25) = ln(3) / 2
        assert!(close(grpo_loss(&g), 0.5 * 3f64.ln(), 1e-15));
        let flipped = group_with(vec![1.0, -1.0], vec![0.25f64.ln(), 0.75f64.ln()]);
        assert_eq!(grpo_loss(&g), grpo_loss(&flipped));
        assert_eq!(grpo_loss(&group_with(vec![0.0; 2], vec![-0.1, -2.0])), 0.0);
    }

    #[test]
    fn ebm_oracle_examples() {
        let sigma = 0.3;
        let p = ebm_oracle_check(&[0.0, 2.0 * sigma * sigma * 3f64.ln()], sigma);
        assert!(close(p[0], 0.75, 1e-12) && close(p[1], 0.25, 1e-12));
        assert_eq!(ebm_oracle_check(&[0.2; 4], 1.0), vec![0.25; 4]);
    }

    #[test]
    fn tau_rule_round_trips_text() {
        for rule in [TauRule::Adaptive, TauRule::Fixed(0.5), TauRule::Fixed(1.0), TauRule::Fixed(3e-7)] {
            assert_eq!(rule.to_string().parse::<TauRule>().unwrap(), rule);
        }
        assert!("-1".parse::<TauRule>().is_err());
        assert!("warm".parse::<TauRule>().is_err());
        assert_eq!(TauRule::Adaptive.resolve(&[0.0, 0.0]), TAU_FLOOR);
    }

    fn fog_case() -> (Image, Image, RestorationPolicy) {
        let clean = synth_scene(&mut Rng::new(4, 0), 40, 40).unwrap();
        let degraded = apply_fog(&clean, &FogLayer::uniform([0.9; 3], 0.5, 40, 40).unwrap()).unwrap();
        let mut report = DiagnosticReport::clean();
        report.severity[0] = 53.1;
        report.presence[0] = true;
        report.fog.t_mean = 0.6;
        report.fog.airlight = [0.85; 3];
        (clean, degraded, init_policy(&report, &PolicyConfig::default()))
    }

    #[test]
    fn flat_advantages_give_zero_gradient() {
        let (clean, degraded, policy) = fog_case();
        let eps = sample_eps(&mut Rng::new(1, 1), 4);
        let adv = [0.0; 4];
        let inputs = GroupInputs { degraded: &degraded, clean: &clean, eps: &eps, advantages: &adv, tau: 0.01 };
        assert_eq!(loss_gradient(&policy, &inputs).unwrap(), [0.0; PARAM_DIM]);
    }

    #[test]
    fn symmetric_candidates_cancel() {
        let (clean, degraded, mut policy) = fog_case();
        // Away from the bounds, where every candidate sees the same smooth error.
        policy.mean.denoise_strength = 0.5;
        policy.mean.sharpen_amount = 0.3;
        policy.mean.derain_strength = 0.2;
        policy.exploration_std = [1e-9; PARAM_DIM];
        let eps = sample_eps(&mut Rng::new(1, 2), 4);
        let adv = advantages(&[1.0, 2.0, 3.0, 4.0]);
        let inputs = GroupInputs { degraded: &degraded, clean: &clean, eps: &eps, advantages: &adv, tau: 0.01 };
        for g in loss_gradient(&policy, &inputs).unwrap() {
            assert!(g.abs() < 1e-5, "{g}");
        }
    }

    #[test]
    fn gradient_matches_loss_differences() {
        let (clean, degraded, policy) = fog_case();
        let eps = sample_eps(&mut Rng::new(3, 3), 6);
        let adv = advantages(&[3.0, -1.0, 0.5, 2.0, 0.0, 4.0]);
        let inputs = GroupInputs { degraded: &degraded, clean: &clean, eps: &eps, advantages: &adv, tau: 0.004 };
        let grad = loss_gradient(&policy, &inputs).unwrap();
        let mu = policy.mean.to_vec();
        let h = 1e-6;
        for k in 0..PARAM_DIM {
            let (mut hi, mut lo) = (mu, mu);
            hi[k] += h;
            lo[k] -= h;
            let std = &policy.exploration_std;
            let fd = (loss_at(&hi, std, &inputs).unwrap() - loss_at(&lo, std, &inputs).unwrap()) / (2.0 * h);
            assert!((grad[k] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "component {k}: {} vs {fd}", grad[k]);
        }
    }

    #[test]
    fn rollout_satisfies_group_invariants() {
        let (clean, degraded, policy) = fog_case();
        let report = diagnose(&degraded).unwrap();
        let eps = sample_eps(&mut Rng::new(5, 5), 6);
        let g = rollout(&policy, eps, &degraded, &clean, &report, TauRule::Adaptive).unwrap();
        g.validate().unwrap();
        let best = (0..g.len()).min_by(|&a, &b| g.mse[a].total_cmp(&g.mse[b])).unwrap();
        let top = (0..g.len()).max_by(|&a, &b| g.log_probs[a].total_cmp(&g.log_probs[b])).unwrap();
        assert_eq!(best, top);
    }
}
