//! Monte Carlo returns and surrogate-objective gradient estimators.
//!
//! One estimator covers the whole family: per-timestep weights realize
//! the discounted (unbiased) or undiscounted (biased) state weighting —
//! the presence or absence of the `gamma^k` factor is the *only*
//! difference between the two — and optional KL / reverse-KL penalties
//! with importance ratios handle the regularized surrogates. Exact
//! dynamic-programming and finite-difference oracles live alongside for
//! verification.

use crate::error::{Error, Result};
use crate::mdp::{OccupancyMode, State, TabularMdp, Trajectory};
use crate::policy::PolicyModel;
use serde::{Deserialize, Serialize};

/// Log-ratio magnitude beyond which importance ratios are clamped.
pub const LOG_RATIO_CLAMP: f64 = 20.0;

/// Penalty attached to the surrogate objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    None,
    /// `+ alpha * log pi(a|s)` under the behavior expectation.
    Kl { alpha: f64 },
    /// `+ beta * (pi/pi_t) * (log pi_t - log pi)`.
    ReverseKl { beta: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        let coeff = match self {
            Regularizer::None => return Ok(()),
            Regularizer::Kl { alpha } => *alpha,
            Regularizer::ReverseKl { beta } => *beta,
        };
        if !coeff.is_finite() || coeff < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "regularizer coefficient {coeff} must be finite and nonnegative"
            )));
        }
        Ok(())
    }
}

/// Which surrogate objective the estimator differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    /// Discounted reproduces the true policy-gradient weighting; the
    /// undiscounted variant is what naive implementations sample.
    pub state_weighting: OccupancyMode,
    pub regularizer: Regularizer,
    /// Weight return terms by `pi/pi_t`. Off pins the ratio to 1
    /// (plain score x return).
    pub use_importance_ratio: bool,
}

impl SurrogateSpec {
    pub fn unbiased() -> Self {
        SurrogateSpec {
            state_weighting: OccupancyMode::Discounted,
            regularizer: Regularizer::None,
            use_importance_ratio: true,
        }
    }

    pub fn biased() -> Self {
        SurrogateSpec { state_weighting: OccupancyMode::Undiscounted, ..Self::unbiased() }
    }

    pub fn with_regularizer(mut self, reg: Regularizer) -> Self {
        self.regularizer = reg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.regularizer.validate()
    }
}

/// A sampled gradient of the surrogate.
#[derive(Debug, Clone, Serialize)]
pub struct GradEstimate {
    pub gradient: Vec<f64>,
    pub n_trajectories: usize,
    /// Sampled surrogate value (same averaging as the gradient).
    pub objective_value: f64,
    /// How many importance ratios hit the log-ratio clamp.
    pub clamped_ratios: usize,
}

/// Per-step Monte Carlo action values `q_k = sum_{j>=k} gamma^{j-k} r_j`
/// by one backward pass.
pub fn mc_returns(trajectory: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; trajectory.len()];
    let mut acc = 0.0;
    for (k, step) in trajectory.steps.iter().enumerate().rev() {
        acc = step.reward + gamma * acc;
        out[k] = acc;
    }
    out
}

/// One flattened transition with its Monte Carlo return attached; the
/// unit the training inner loop and the occupancy perturbation operate
/// on.
#[derive(Debug, Clone)]
pub struct FlatStep {
    pub state: State,
    pub action: crate::mdp::Action,
    pub q_hat: f64,
    pub timestep: usize,
    pub behavior_log_prob: f64,
}

/// Flatten a batch into transitions, computing Monte Carlo returns per
/// trajectory. Order: trajectories in batch order, steps in time order.
pub fn flatten_dataset(batch: &[Trajectory], gamma: f64) -> Vec<FlatStep> {
    let mut out = Vec::with_capacity(batch.iter().map(|t| t.len()).sum());
    for traj in batch {
        let q = mc_returns(traj, gamma);
        for (step, q_hat) in traj.steps.iter().zip(q) {
            out.push(FlatStep {
                state: step.state.clone(),
                action: step.action.clone(),
                q_hat,
                timestep: step.timestep,
                behavior_log_prob: step.behavior_log_prob,
            });
        }
    }
    out
}

/// The per-step gradient and objective term shared by both estimators.
struct StepTerm {
    grad_coeff: f64,
    objective: f64,
    clamped: bool,
}

fn step_term(
    behavior: &PolicyModel,
    spec: &SurrogateSpec,
    state: &State,
    action: &crate::mdp::Action,
    q_hat: f64,
    log_pi: f64,
) -> Result<StepTerm> {
    // Importance ratio pi/pi_t from live log-probs, clamped in log space.
    let (ratio, log_diff, clamped) = if spec.use_importance_ratio
        || matches!(spec.regularizer, Regularizer::ReverseKl { .. })
    {
        let log_pi_t = behavior.log_prob(state, action)?;
        let raw = log_pi - log_pi_t;
        let clamped = raw.abs() > LOG_RATIO_CLAMP;
        // The clamped log-ratio is used consistently downstream.
        let diff = raw.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP);
        (diff.exp(), diff, clamped)
    } else {
        (1.0, 0.0, false)
    };
    let return_ratio = if spec.use_importance_ratio { ratio } else { 1.0 };

    // d/dtheta [ ratio * q + reg ] = grad_coeff * score.
    let mut grad_coeff = return_ratio * q_hat;
    let mut objective = return_ratio * q_hat;
    match spec.regularizer {
        Regularizer::None => {}
        Regularizer::Kl { alpha } => {
            grad_coeff += alpha;
            objective += alpha * log_pi;
        }
        Regularizer::ReverseKl { beta } => {
            grad_coeff += beta * ratio * (-log_diff - 1.0);
            objective += beta * ratio * (-log_diff);
        }
    }
    Ok(StepTerm { grad_coeff, objective, clamped })
}

/// Gradient of the surrogate over a batch of trajectories:
/// per-trajectory sums of `w_k * d/dtheta[(pi/pi_t) q_k + reg_k]`
/// averaged over trajectories, with `w_k = gamma^k` (discounted) or 1
/// (undiscounted). Contributions are reduced in batch order, so results
/// are bit-stable for a given batch ordering.
pub fn estimate_gradient(
    dataset: &[Trajectory],
    policy: &PolicyModel,
    behavior: &PolicyModel,
    spec: &SurrogateSpec,
    gamma: f64,
) -> Result<GradEstimate> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = policy.n_params();
    let mut gradient = vec![0.0; dim];
    let mut objective = 0.0;
    let mut clamped_ratios = 0;
    for traj in dataset {
        if traj.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let q = mc_returns(traj, gamma);
        let mut weight = 1.0;
        for (step, &q_hat) in traj.steps.iter().zip(q.iter()) {
            let (log_pi, score) = policy.log_prob_with_grad(&step.state, &step.action)?;
            let term =
                step_term(behavior, spec, &step.state, &step.action, q_hat, log_pi)?;
            if term.clamped {
                clamped_ratios += 1;
            }
            let c = weight * term.grad_coeff;
            for (g, s) in gradient.iter_mut().zip(score.iter()) {
                *g += c * s;
            }
            objective += weight * term.objective;
            if spec.state_weighting == OccupancyMode::Discounted {
                weight *= gamma;
            }
        }
    }
    let n = dataset.len() as f64;
    for g in &mut gradient {
        *g /= n;
    }
    let estimate = GradEstimate {
        gradient,
        n_trajectories: dataset.len(),
        objective_value: objective / n,
        clamped_ratios,
    };
    if estimate.gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient estimate".into()));
    }
    Ok(estimate)
}

/// Transition-level variant for minibatched inner loops: the same
/// per-step terms, averaged over the steps in the slice instead of over
/// whole trajectories.
pub fn estimate_gradient_flat(
    steps: &[FlatStep],
    policy: &PolicyModel,
    behavior: &PolicyModel,
    spec: &SurrogateSpec,
    gamma: f64,
) -> Result<GradEstimate> {
    spec.validate()?;
    if steps.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = policy.n_params();
    let mut gradient = vec![0.0; dim];
    let mut objective = 0.0;
    let mut clamped_ratios = 0;
    for step in steps {
        let (log_pi, score) = policy.log_prob_with_grad(&step.state, &step.action)?;
        let term =
            step_term(behavior, spec, &step.state, &step.action, step.q_hat, log_pi)?;
        if term.clamped {
            clamped_ratios += 1;
        }
        let weight = match spec.state_weighting {
            OccupancyMode::Discounted => gamma.powi(step.timestep as i32),
            OccupancyMode::Undiscounted => 1.0,
        };
        let c = weight * term.grad_coeff;
        for (g, s) in gradient.iter_mut().zip(score.iter()) {
            *g += c * s;
        }
        objective += weight * term.objective;
    }
    let n = steps.len() as f64;
    for g in &mut gradient {
        *g /= n;
    }
    let estimate = GradEstimate {
        gradient,
        n_trajectories: steps.len(),
        objective_value: objective / n,
        clamped_ratios,
    };
    if estimate.gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient estimate".into()));
    }
    Ok(estimate)
}

/// Ground-truth policy gradient
/// `sum_s d(s) sum_a grad pi(a|s) q_pi(s,a)` from exact occupancy and
/// exact q-values. Works for any policy that answers discrete
/// `action_probs` queries (tabular softmax, tied-alias, mlp-softmax).
pub fn exact_pg(mdp: &TabularMdp, policy: &PolicyModel, mode: OccupancyMode) -> Result<Vec<f64>> {
    let table = policy.tabulate(mdp.n_states())?;
    let occ = mdp.occupancy(&table, mode)?;
    let q = mdp.exact_q(&table)?;
    let mut grad = vec![0.0; policy.n_params()];
    for (i, &s) in mdp.non_terminal_states().iter().enumerate() {
        let d = occ.weights[i];
        if d == 0.0 {
            continue;
        }
        for a in 0..mdp.n_actions() {
            // grad pi = pi * grad log pi.
            let coeff = d * q[s][a] * table[s][a];
            if coeff == 0.0 {
                continue;
            }
            let score = policy.grad_log_prob(&State::Discrete(s), &crate::mdp::Action::Discrete(a))?;
            for (g, sc) in grad.iter_mut().zip(score.iter()) {
                *g += coeff * sc;
            }
        }
    }
    Ok(grad)
}

/// Central finite differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_grad<F>(objective: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::Domain(format!("step size {h} must be positive")));
    }
    let mut grad = vec![0.0; params.len()];
    let mut point = params.to_vec();
    for i in 0..params.len() {
        point[i] = params[i] + h;
        let up = objective(&point)?;
        point[i] = params[i] - h;
        let down = objective(&point)?;
        point[i] = params[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests;
