//! The four-fork bias-spread protocol: fork one epoch of training from a
//! common checkpoint on identical data, once per estimator/correction
//! combination, and measure how far the biased and unbiased updates land
//! from each other.

use serde::{Deserialize, Serialize};

use super::{eard, probe_from_trajectories};
use crate::error::Result;
use crate::estimator::{Regularizer, SurrogateSpec};
use crate::harness::engine::{train_epoch, InnerLoop};
use crate::mdp::Trajectory;
use crate::optim::{Algorithm, OptimState};
use crate::policy::PolicyModel;
use crate::rng::stream_indexed;

/// One epoch's spread measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSpreadRecord {
    pub epoch: usize,
    /// EARD between the corrected forks (unbiased+corr vs biased+corr).
    pub d1: f64,
    /// EARD between the uncorrected forks (unbiased vs biased).
    pub d2: f64,
    /// `(d1 - d2) / (d1 + d2)`; negative means correction pulled the pair
    /// closer together.
    pub d_pct: f64,
}

/// `(d1 - d2) / (d1 + d2)`, defined as 0 on a degenerate denominator.
pub fn d_pct(d1: f64, d2: f64) -> f64 {
    if d1 + d2 < 1e-12 {
        0.0
    } else {
        (d1 - d2) / (d1 + d2)
    }
}

/// Hyperparameters shared by the four forks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSpreadConfig {
    pub gamma: f64,
    /// Epoch learning rate handed to every fork.
    pub lr_epoch: f64,
    pub inner: InnerLoop,
    /// KL strength of the corrected forks.
    pub alpha: f64,
    /// Optimizer of the corrected forks ("correction" = this + KL).
    pub corrected_algorithm: Algorithm,
    pub use_importance_ratio: bool,
    /// Cap on probe pairs taken from the dataset.
    pub probe_limit: usize,
    /// Wire the unbiased-uncorrected estimator and the baseline optimizer
    /// into all four slots; the forks then train bit-identically and both
    /// distances must come out exactly zero.
    pub self_test: bool,
}

impl BiasSpreadConfig {
    pub fn new(gamma: f64, lr_epoch: f64) -> Self {
        BiasSpreadConfig {
            gamma,
            lr_epoch,
            inner: InnerLoop::default(),
            alpha: 0.3,
            corrected_algorithm: Algorithm::RmsProp,
            use_importance_ratio: true,
            probe_limit: 10_000,
            self_test: false,
        }
    }
}

/// Clone the baseline optimizer into a fork slot, switching only the
/// update rule: matching accumulators guarantee the forks differ in
/// nothing but estimator/correction wiring.
fn fork_optimizer(baseline: &OptimState, algorithm: Algorithm) -> OptimState {
    let mut opt = baseline.clone();
    opt.algorithm = algorithm;
    opt
}

/// Train four one-epoch forks — unbiased, biased, unbiased+correction,
/// biased+correction — from `baseline` on the same frozen `dataset`, then
/// measure d1 (corrected pair), d2 (uncorrected pair), and d_pct on a
/// probe of (state, action) pairs from the dataset.
///
/// Every fork consumes an identically-seeded rng stream keyed by
/// (`seed`, `epoch`), so minibatch draws coincide across forks.
pub fn bias_spread_step(
    baseline: &PolicyModel,
    baseline_opt: &OptimState,
    dataset: &[Trajectory],
    cfg: &BiasSpreadConfig,
    epoch: usize,
    seed: u64,
) -> Result<BiasSpreadRecord> {
    let unbiased = SurrogateSpec {
        use_importance_ratio: cfg.use_importance_ratio,
        ..SurrogateSpec::unbiased()
    };
    let biased = SurrogateSpec {
        use_importance_ratio: cfg.use_importance_ratio,
        ..SurrogateSpec::biased()
    };
    let kl = Regularizer::Kl { alpha: cfg.alpha };
    let mut forks = [
        (unbiased, baseline_opt.algorithm),
        (biased, baseline_opt.algorithm),
        (unbiased.with_regularizer(kl), cfg.corrected_algorithm),
        (biased.with_regularizer(kl), cfg.corrected_algorithm),
    ];
    if cfg.self_test {
        forks = [forks[0]; 4];
    }

    let mut trained = Vec::with_capacity(4);
    for (spec, algorithm) in &forks {
        let mut policy = baseline.clone();
        let mut opt = fork_optimizer(baseline_opt, *algorithm);
        let mut rng = stream_indexed(seed, "bias-spread-inner", epoch as u64);
        train_epoch(&mut policy, &mut opt, dataset, spec, cfg.gamma, cfg.lr_epoch, &cfg.inner, &mut rng)?;
        trained.push(policy);
    }

    let probe = probe_from_trajectories(dataset, cfg.probe_limit);
    let d1 = eard(&probe, &trained[2], &trained[3])?.value;
    let d2 = eard(&probe, &trained[0], &trained[1])?.value;
    Ok(BiasSpreadRecord { epoch, d1, d2, d_pct: d_pct(d1, d2) })
}
