//! Optimizers, the learning-rate decay schedule, and the Fisher-information
//! machinery that connects RMSProp to diagonal-Fisher preconditioning.
//!
//! Everything here uses the ascent convention: a positive gradient component
//! moves its parameter up. All update rules are written against `f64` slices
//! so the same code drives tabular policies and MLPs.
//!
//! The RMSProp denominator and [`fim_precondition`] share one code path
//! ([`adaptive_scale`]’s `g / sqrt(m + delta)`), which makes the
//! "RMSProp is diagonal-Fisher preconditioning" identification exact in
//! code, not just in expectation: feeding RMSProp pure score vectors makes
//! its accumulator an EMA estimate of the Fisher diagonal, and dividing by
//! `sqrt(G + delta)` is then literally [`fim_precondition`] with that
//! estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, State};
use crate::policy::PolicyModel;

/// Update rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Momentum,
    RmsProp,
    Adam,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Momentum => "momentum",
            Algorithm::RmsProp => "rmsprop",
            Algorithm::Adam => "adam",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Algorithm::Sgd),
            "momentum" => Ok(Algorithm::Momentum),
            "rmsprop" => Ok(Algorithm::RmsProp),
            "adam" => Ok(Algorithm::Adam),
            other => Err(Error::InvalidConfig(format!(
                "unknown optimizer {other:?} (expected sgd|momentum|rmsprop|adam)"
            ))),
        }
    }
}

/// Optimizer configuration plus its mutable accumulators.
///
/// The accumulators are part of the serialized form so a training run can
/// be forked mid-flight and both branches resume from the identical
/// first/second-moment state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimState {
    pub algorithm: Algorithm,
    /// Step size; > 0. The harness rewrites this per inner step when a
    /// decay schedule is active.
    pub lr: f64,
    pub momentum_coeff: f64,
    pub rmsprop_smoothing: f64,
    pub adam_betas: (f64, f64),
    pub delta: f64,
    /// Adam only. Kept switchable so the RMSProp degeneration (beta1 = 0,
    /// no correction, delta = 0) is checkable step-for-step.
    pub bias_correction: bool,
    /// Second-moment EMA (RMSProp `G`, Adam `v`). Componentwise >= 0.
    pub second_moment: Vec<f64>,
    /// First-moment buffer (Momentum `m`, Adam `m`).
    pub momentum_buf: Vec<f64>,
    /// Completed steps; Adam bias correction uses `t` starting at 1.
    pub step_count: u64,
}

impl OptimState {
    pub fn new(algorithm: Algorithm, lr: f64, n_params: usize) -> Self {
        OptimState {
            algorithm,
            lr,
            momentum_coeff: 0.9,
            rmsprop_smoothing: 0.99,
            adam_betas: (0.9, 0.999),
            delta: 1e-8,
            bias_correction: true,
            second_moment: vec![0.0; n_params],
            momentum_buf: vec![0.0; n_params],
            step_count: 0,
        }
    }

    pub fn sgd(lr: f64, n_params: usize) -> Self {
        Self::new(Algorithm::Sgd, lr, n_params)
    }

    pub fn momentum(lr: f64, n_params: usize) -> Self {
        Self::new(Algorithm::Momentum, lr, n_params)
    }

    pub fn rmsprop(lr: f64, n_params: usize) -> Self {
        Self::new(Algorithm::RmsProp, lr, n_params)
    }

    pub fn adam(lr: f64, n_params: usize) -> Self {
        Self::new(Algorithm::Adam, lr, n_params)
    }

    pub fn n_params(&self) -> usize {
        self.second_moment.len()
    }

    /// Reject out-of-range hyperparameters, e.g. after deserializing.
    pub fn validate(&self) -> Result<()> {
        let in_unit = |name: &str, x: f64| -> Result<()> {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {x}")));
            }
            Ok(())
        };
        in_unit("momentum coefficient", self.momentum_coeff)?;
        in_unit("adam beta1", self.adam_betas.0)?;
        in_unit("adam beta2", self.adam_betas.1)?;
        if !(self.rmsprop_smoothing > 0.0 && self.rmsprop_smoothing < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rmsprop smoothing must lie in (0, 1), got {}",
                self.rmsprop_smoothing
            )));
        }
        self.check(self.n_params())
    }

    fn check(&self, n_params: usize) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.delta < 0.0 || !self.delta.is_finite() {
            return Err(Error::InvalidConfig(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.second_moment.len() != n_params || self.momentum_buf.len() != n_params {
            return Err(Error::DimensionMismatch(format!(
                "optimizer accumulators sized {}/{} but parameter vector has {}",
                self.second_moment.len(),
                self.momentum_buf.len(),
                n_params
            )));
        }
        Ok(())
    }
}

/// `g / sqrt(m + delta)`, with an exact zero for a zero component.
///
/// Shared by the RMSProp update and [`fim_precondition`] so the two are
/// numerically identical. The zero guard keeps "zero gradient moves
/// nothing" true even at `m = delta = 0`.
#[inline]
fn adaptive_scale(g: f64, second_moment: f64, delta: f64) -> f64 {
    if g == 0.0 {
        0.0
    } else {
        g / (second_moment + delta).sqrt()
    }
}

/// One ascent update of `params` in place.
///
/// - sgd: `theta += lr * g`
/// - momentum: `m <- mu * m + g`, `theta += lr * m`
/// - rmsprop: `G <- rho * G + (1 - rho) * g^2`, `theta += lr * g / sqrt(G + delta)`
/// - adam: EMA first/second moments, bias-corrected, `theta += lr * m_hat / (sqrt(v_hat) + delta)`
///
/// Gradients must be finite and the ascent direction for the objective.
pub fn optimizer_step(state: &mut OptimState, params: &mut [f64], gradient: &[f64]) -> Result<()> {
    if gradient.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient length {} vs parameter length {}",
            gradient.len(),
            params.len()
        )));
    }
    state.check(params.len())?;
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient passed to optimizer_step".into()));
    }
    state.step_count += 1;
    match state.algorithm {
        Algorithm::Sgd => {
            for (p, g) in params.iter_mut().zip(gradient) {
                *p += state.lr * g;
            }
        }
        Algorithm::Momentum => {
            let mu = state.momentum_coeff;
            for ((p, m), g) in params.iter_mut().zip(&mut state.momentum_buf).zip(gradient) {
                *m = mu * *m + g;
                *p += state.lr * *m;
            }
        }
        Algorithm::RmsProp => {
            let rho = state.rmsprop_smoothing;
            for ((p, v), g) in params.iter_mut().zip(&mut state.second_moment).zip(gradient) {
                *v = rho * *v + (1.0 - rho) * g * g;
                *p += state.lr * adaptive_scale(*g, *v, state.delta);
            }
        }
        Algorithm::Adam => {
            let (b1, b2) = state.adam_betas;
            let t = state.step_count as i32;
            let (c1, c2) = if state.bias_correction {
                (1.0 - b1.powi(t), 1.0 - b2.powi(t))
            } else {
                (1.0, 1.0)
            };
            for (((p, m), v), g) in params
                .iter_mut()
                .zip(&mut state.momentum_buf)
                .zip(&mut state.second_moment)
                .zip(gradient)
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                if m_hat != 0.0 {
                    *p += state.lr * m_hat / (v_hat.sqrt() + state.delta);
                }
            }
        }
    }
    Ok(())
}

/// Stepped decay: `base_lr * decay_factor^floor(epoch / decay_every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl LrSchedule {
    pub fn new(base_lr: f64, decay_factor: f64, decay_every: usize) -> Result<Self> {
        if !(base_lr > 0.0 && base_lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("base_lr must be positive, got {base_lr}")));
        }
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decay_factor must lie in (0, 1], got {decay_factor}"
            )));
        }
        if decay_every == 0 {
            return Err(Error::InvalidConfig("decay_every must be >= 1".into()));
        }
        Ok(LrSchedule { base_lr, decay_factor, decay_every })
    }

    /// Constant schedule at `base_lr`.
    pub fn constant(base_lr: f64) -> Result<Self> {
        Self::new(base_lr, 1.0, 1)
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.base_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }

    /// Re-run the constructor checks, e.g. after deserializing.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.base_lr, self.decay_factor, self.decay_every).map(|_| ())
    }
}

/// Fisher information of a policy: the full matrix `F` and its diagonal.
///
/// Construction makes `full` bitwise symmetric and the diagonal a sum of
/// squares, so both invariants (symmetry, nonnegative diagonal) hold by
/// building rather than by postcondition checks.
#[derive(Debug, Clone)]
pub struct FimMatrix {
    /// `F[i][j] = E_s E_a[score_i * score_j]`.
    pub full: Vec<Vec<f64>>,
    /// The diagonal of `full`.
    pub diag: Vec<f64>,
}

impl FimMatrix {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Quadratic form `x^T F x`; nonnegative for any PSD `F`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (row, &xi) in self.full.iter().zip(x) {
            let mut inner = 0.0;
            for (fij, &xj) in row.iter().zip(x) {
                inner += fij * xj;
            }
            total += xi * inner;
        }
        total
    }
}

/// Exact Fisher information `E_{s~dist} E_{a~pi}[score score^T]` for a
/// policy with enumerable discrete actions (tabular-softmax or tied-alias).
///
/// `states` and `state_dist` give the weighting distribution over discrete
/// states; the weights must be nonnegative and sum to 1 (pass an occupancy
/// through [`crate::mdp::OccupancyWeights::normalized`] first).
pub fn exact_fim(policy: &PolicyModel, states: &[usize], state_dist: &[f64]) -> Result<FimMatrix> {
    match policy.kind_str() {
        "tabular-softmax" | "tied-alias" => {}
        kind => return Err(Error::UnsupportedKind(kind)),
    }
    if states.len() != state_dist.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} states vs {} weights",
            states.len(),
            state_dist.len()
        )));
    }
    if state_dist.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::DegenerateInput("negative state weight in exact_fim".into()));
    }
    let total: f64 = state_dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::DegenerateInput(format!(
            "state weights must sum to 1 (got {total}); normalize the occupancy first"
        )));
    }

    let n = policy.n_params();
    let mut full = vec![vec![0.0; n]; n];
    for (&s, &w) in states.iter().zip(state_dist) {
        if w == 0.0 {
            continue;
        }
        let state = State::Discrete(s);
        let probs = policy.action_probs(&state)?;
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let score = policy.grad_log_prob(&state, &Action::Discrete(a))?;
            let coeff = w * pa;
            for i in 0..n {
                if score[i] == 0.0 {
                    continue;
                }
                let row = coeff * score[i];
                for j in 0..n {
                    full[i][j] += row * score[j];
                }
            }
        }
    }
    let diag = (0..n).map(|i| full[i][i]).collect();
    Ok(FimMatrix { full, diag })
}

/// Diagonal-Fisher preconditioning: `g_i / sqrt(fim_diag_i + delta)`.
///
/// Uses the identical arithmetic as the RMSProp denominator, so a RMSProp
/// step equals `lr * fim_precondition(g, G, delta)` with the post-update
/// accumulator `G`.
pub fn fim_precondition(gradient: &[f64], fim_diag: &[f64], delta: f64) -> Result<Vec<f64>> {
    if gradient.len() != fim_diag.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient length {} vs fim diagonal length {}",
            gradient.len(),
            fim_diag.len()
        )));
    }
    if fim_diag.iter().any(|&d| !(d >= 0.0)) {
        return Err(Error::DegenerateInput("negative Fisher diagonal entry".into()));
    }
    if delta < 0.0 {
        return Err(Error::InvalidConfig(format!("delta must be >= 0, got {delta}")));
    }
    Ok(gradient
        .iter()
        .zip(fim_diag)
        .map(|(&g, &d)| adaptive_scale(g, d, delta))
        .collect())
}

#[cfg(test)]
mod tests;
