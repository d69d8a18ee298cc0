//! The training loop: rollout, fidelity scoring, diagnosis, advantages, and a
//! projected gradient step per batch.

use crate::diagnose::DiagnosticReport;
use crate::error::{Error, Result};
use crate::imgcore::rng::stage;
use crate::imgcore::{Image, Rng};
use crate::restore::{
    init_policy, sample_eps, PolicyConfig, RestorationParams, RestorationPolicy, PARAM_DIM, PARAM_LOWER,
    PARAM_UPPER,
};

use super::{loss_gradient, rollout, GroupInputs, TauRule};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Candidates per group (N).
    pub group_size: usize,
    pub tau: TauRule,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Images per step; batches walk the dataset cyclically.
    pub batch_size: usize,
    pub policy: PolicyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            tau: TauRule::Adaptive,
            learning_rate: 0.02,
            steps: 200,
            seed: 0,
            batch_size: 4,
            policy: PolicyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::param("group", format!("need at least 2 candidates, got {}", self.group_size)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("lr", format!("{} must be finite and nonnegative", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch", "must be at least 1"));
        }
        self.tau.validate()?;
        self.policy.validate()
    }
}

/// One training image with its ground truth and the frozen input diagnosis.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub degraded: Image,
    pub clean: Image,
    pub report: DiagnosticReport,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub mean_reward: f64,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl StepLog {
    /// Tab-separated log line without the trailing newline.
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.4}\t{:.4}\t{:.6}",
            self.step, self.loss, self.mean_reward, self.mean_psnr, self.mean_ssim
        )
    }
}

/// The learned quantity is an offset added to each image's report-seeded mean,
/// so one parameter vector serves images with different diagnoses.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub offset: [f64; PARAM_DIM],
    pub step: usize,
    /// Mean group reward per completed step.
    pub reward_history: Vec<f64>,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            offset: [0.0; PARAM_DIM],
            step: 0,
            reward_history: Vec::new(),
        })
    }

    /// Report-seeded policy shifted by the learned offset.
    pub fn policy_for(&self, report: &DiagnosticReport) -> RestorationPolicy {
        let mut policy = init_policy(report, &self.config.policy);
        let mu = policy.mean.to_vec();
        policy.mean = RestorationParams::from_vec(std::array::from_fn(|i| mu[i] + self.offset[i])).project();
        policy
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.reward_history.len() != self.step {
            return Err(Error::Invariant(format!(
                "reward history has {} entries at step {}",
                self.reward_history.len(),
                self.step
            )));
        }
        if let Some(v) = self.offset.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite offset {v}")));
        }
        Ok(())
    }
}

fn batch_indices(step: usize, batch: usize, n: usize) -> Vec<usize> {
    (0..batch.min(n)).map(|j| (step * batch + j) % n).collect()
}

/// Runs one step on its cyclic batch and advances the state.
pub fn train_step(state: &mut TrainState, dataset: &[TrainSample]) -> Result<StepLog> {
    if dataset.is_empty() {
        return Err(Error::param("dataset", "no training samples"));
    }
    let cfg = state.config.clone();
    let step_rng = Rng::for_image(cfg.seed, state.step as u64, stage::POLICY);
    let batch = batch_indices(state.step, cfg.batch_size, dataset.len());
    let mut grad = [0.0; PARAM_DIM];
    let (mut loss, mut reward, mut psnr, mut ssim) = (0.0, 0.0, 0.0, 0.0);
    for &idx in &batch {
        let sample = &dataset[idx];
        let policy = state.policy_for(&sample.report);
        let eps = sample_eps(&mut step_rng.derive(idx as u64), cfg.group_size);
        let group = rollout(&policy, eps, &sample.degraded, &sample.clean, &sample.report, cfg.tau)?;
        let inputs = GroupInputs {
            degraded: &sample.degraded,
            clean: &sample.clean,
            eps: &group.eps,
            advantages: &group.advantages,
            tau: group.tau,
        };
        let g = loss_gradient(&policy, &inputs)?;
        for i in 0..PARAM_DIM {
            grad[i] += g[i];
        }
        loss += super::grpo_loss(&group);
        reward += group.mean_reward();
        psnr += group.mean_psnr();
        ssim += group.mean_ssim();
    }
    let b = batch.len() as f64;
    for i in 0..PARAM_DIM {
        let span = PARAM_UPPER[i] - PARAM_LOWER[i];
        state.offset[i] = (state.offset[i] - cfg.learning_rate * grad[i] / b).clamp(-span, span);
    }
    let log = StepLog {
        step: state.step,
        loss: loss / b,
        mean_reward: reward / b,
        mean_psnr: psnr / b,
        mean_ssim: ssim / b,
    };
    state.step += 1;
    state.reward_history.push(log.mean_reward);
    Ok(log)
}

/// Trains from scratch for `config.steps` steps, reporting each step to `on_step`.
pub fn train_with(
    dataset: &[TrainSample],
    config: TrainConfig,
    mut on_step: impl FnMut(&TrainState, &StepLog) -> Result<()>,
) -> Result<TrainState> {
    if dataset.is_empty() {
        return Err(Error::param("dataset", "no training samples"));
    }
    let mut state = TrainState::new(config)?;
    while state.step < state.config.steps {
        let log = train_step(&mut state, dataset)?;
        on_step(&state, &log)?;
    }
    Ok(state)
}

pub fn train(dataset: &[TrainSample], config: TrainConfig) -> Result<TrainState> {
    train_with(dataset, config, |_, _| Ok(()))
}
