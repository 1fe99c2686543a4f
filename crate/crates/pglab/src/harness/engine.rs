//! The epoch trainer shared by every experiment and by the bias-spread
//! forks: K minibatch ascent steps over a frozen dataset.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimator::{estimate_gradient_flat, flatten_dataset, FlatStep, SurrogateSpec};
use crate::mdp::Trajectory;
use crate::optim::{optimizer_step, OptimState};
use crate::policy::PolicyModel;
use crate::rng::SeedRng;

/// Inner-loop shape of one training epoch.
///
/// An epoch over dataset `D` runs `steps` minibatch updates (default: one
/// per transition in `D`), each on `batch_size` transitions drawn from `D`
/// with replacement (default 1; `None` = the whole dataset in order), at a
/// per-step learning rate of `lr_epoch / steps * lr_scale` (default scale
/// 1000, matching "lr/|D| x 1000" semantics for the defaults).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InnerLoop {
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_scale: f64,
}

impl Default for InnerLoop {
    fn default() -> Self {
        InnerLoop { steps: None, batch_size: Some(1), lr_scale: 1000.0 }
    }
}

impl InnerLoop {
    /// One classic full-batch step per epoch at exactly `lr_epoch`.
    pub fn full_batch() -> Self {
        InnerLoop { steps: Some(1), batch_size: None, lr_scale: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == Some(0) {
            return Err(Error::InvalidConfig("inner-loop steps must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("inner-loop batch size must be >= 1".into()));
        }
        if !(self.lr_scale > 0.0 && self.lr_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "inner-loop lr scale must be positive, got {}",
                self.lr_scale
            )));
        }
        Ok(())
    }
}

/// What one epoch did, for metrics rows.
#[derive(Debug, Clone, Copy)]
pub struct EpochReport {
    /// Mean undiscounted episode return of the (pre-update) dataset.
    pub mean_return: f64,
    /// Minibatch steps taken.
    pub inner_steps: usize,
    /// Per-step learning rate used.
    pub lr_step: f64,
    /// Importance-ratio clamps across all steps.
    pub clamped_ratios: usize,
    /// Mean sampled surrogate value across steps.
    pub mean_objective: f64,
}

/// What the minibatch loop did; [`EpochReport`] minus the episode-level
/// return, which a flattened dataset no longer carries.
#[derive(Debug, Clone, Copy)]
pub struct StepLoopReport {
    pub inner_steps: usize,
    pub lr_step: f64,
    pub clamped_ratios: usize,
    pub mean_objective: f64,
}

/// The minibatch ascent loop over an already-flattened dataset.
///
/// Callers that rewrite the transition set before training (off-policy
/// perturbations) use this directly; `train_epoch` is the common wrapper
/// that flattens and takes the behavior snapshot itself.
pub fn step_loop(
    policy: &mut PolicyModel,
    opt: &mut OptimState,
    flat: &[FlatStep],
    behavior: &PolicyModel,
    spec: &SurrogateSpec,
    gamma: f64,
    lr_epoch: f64,
    inner: &InnerLoop,
    rng: &mut SeedRng,
) -> Result<StepLoopReport> {
    inner.validate()?;
    spec.validate()?;
    if flat.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(lr_epoch > 0.0 && lr_epoch.is_finite()) {
        return Err(Error::InvalidConfig(format!("epoch learning rate {lr_epoch} must be > 0")));
    }
    let steps = inner.steps.unwrap_or(flat.len());
    let lr_step = lr_epoch / steps as f64 * inner.lr_scale;

    opt.lr = lr_step;
    let mut clamped = 0;
    let mut objective_sum = 0.0;
    let mut minibatch: Vec<FlatStep> = Vec::new();
    for _ in 0..steps {
        let batch: &[FlatStep] = match inner.batch_size {
            None => flat,
            Some(b) => {
                minibatch.clear();
                minibatch.extend((0..b).map(|_| flat[rng.gen_range(0..flat.len())].clone()));
                &minibatch
            }
        };
        let est = estimate_gradient_flat(batch, policy, behavior, spec, gamma)?;
        clamped += est.clamped_ratios;
        objective_sum += est.objective_value;
        let mut params = policy.params().to_vec();
        optimizer_step(opt, &mut params, &est.gradient)?;
        policy
            .set_params(params)
            .map_err(|e| Error::Diverged(format!("parameters left the valid domain: {e}")))?;
    }
    Ok(StepLoopReport {
        inner_steps: steps,
        lr_step,
        clamped_ratios: clamped,
        mean_objective: objective_sum / steps as f64,
    })
}

/// One epoch of training on a frozen dataset.
///
/// The behavior policy for importance ratios and regularizers is the
/// policy as of epoch entry; updates inside the epoch see a fixed target.
/// Errors that indicate the parameters or gradients left the finite
/// domain are reported as [`Error::Diverged`] so callers can isolate the
/// failing variant without aborting its siblings.
pub fn train_epoch(
    policy: &mut PolicyModel,
    opt: &mut OptimState,
    dataset: &[Trajectory],
    spec: &SurrogateSpec,
    gamma: f64,
    lr_epoch: f64,
    inner: &InnerLoop,
    rng: &mut SeedRng,
) -> Result<EpochReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let behavior = policy.clone();
    let flat = flatten_dataset(dataset, gamma);
    let report = step_loop(policy, opt, &flat, &behavior, spec, gamma, lr_epoch, inner, rng)?;
    Ok(EpochReport {
        mean_return: mean_episode_return(dataset),
        inner_steps: report.inner_steps,
        lr_step: report.lr_step,
        clamped_ratios: report.clamped_ratios,
        mean_objective: report.mean_objective,
    })
}

/// Mean undiscounted episode return of a batch.
pub fn mean_episode_return(dataset: &[Trajectory]) -> f64 {
    if dataset.is_empty() {
        return f64::NAN;
    }
    dataset.iter().map(|t| t.steps.iter().map(|s| s.reward).sum::<f64>()).sum::<f64>()
        / dataset.len() as f64
}
