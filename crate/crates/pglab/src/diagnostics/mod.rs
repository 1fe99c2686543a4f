//! Measurement instruments: EARD model distance, the four-fork
//! bias-spread protocol, feature PCA with action correlation, and
//! score-model loss surfaces with filter normalization.

pub mod bias_spread;
pub mod pca;
pub mod surface;

pub use bias_spread::{bias_spread_step, d_pct, BiasSpreadConfig, BiasSpreadRecord};
pub use pca::{action_correlation, pca_2d, Pca2d};
pub use surface::{fit_score_model, loss_surface, surface_loss, LossSurface, ScoreModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::LOG_RATIO_CLAMP;
use crate::mdp::{sample_episode, Action, Environment, OccupancyMode, State, TabularMdp, Trajectory};
use crate::policy::PolicyModel;
use crate::rng::SeedRng;

/// Expected absolute ratio deviation between two policies, measured on a
/// probe drawn under a third (behavior) policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EardResult {
    /// `E |pi_1(a|s) / pi_2(a|s) - 1|`, >= 0; zero iff the policies agree
    /// in density on every probed pair.
    pub value: f64,
    pub n_samples: usize,
    /// Probe pairs whose log-ratio hit the +-20 clamp.
    pub clamped_ratios: usize,
}

/// Sampled EARD over a probe of (state, action) pairs.
///
/// The probe must have been collected under the behavior policy the
/// distance is defined against (states from its visitation, actions from
/// its conditional). The measure is asymmetric: `pi_2` sits in the
/// denominator.
pub fn eard(
    probe: &[(State, Action)],
    pi_1: &PolicyModel,
    pi_2: &PolicyModel,
) -> Result<EardResult> {
    if probe.is_empty() {
        return Err(Error::EmptyProbe);
    }
    let mut total = 0.0;
    let mut clamped = 0;
    for (state, action) in probe {
        let diff = pi_1.log_prob(state, action)? - pi_2.log_prob(state, action)?;
        if !diff.is_finite() {
            return Err(Error::NonFinite("log-probability ratio in eard".into()));
        }
        if diff.abs() > LOG_RATIO_CLAMP {
            clamped += 1;
        }
        total += (diff.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP).exp() - 1.0).abs();
    }
    Ok(EardResult { value: total / probe.len() as f64, n_samples: probe.len(), clamped_ratios: clamped })
}

/// EARD with the expectation taken in closed form on a tabular MDP:
/// `sum_s d(s) sum_a pi_t(a|s) |pi_1(a|s)/pi_2(a|s) - 1|` with `d` the
/// normalized undiscounted occupancy of `pi_t` — the distribution the
/// sampled probe actually comes from.
pub fn eard_exact_tabular(
    mdp: &TabularMdp,
    pi_t: &PolicyModel,
    pi_1: &PolicyModel,
    pi_2: &PolicyModel,
) -> Result<f64> {
    let table_t = pi_t.tabulate(mdp.n_states())?;
    let occ = mdp.occupancy(&table_t, OccupancyMode::Undiscounted)?;
    let dist = occ.normalized();
    let mut value = 0.0;
    for (i, &s) in mdp.non_terminal_states().iter().enumerate() {
        if dist[i] == 0.0 {
            continue;
        }
        let state = State::Discrete(s);
        let p1 = pi_1.action_probs(&state)?;
        let p2 = pi_2.action_probs(&state)?;
        for a in 0..mdp.n_actions() {
            let weight = table_t[s][a];
            if weight == 0.0 {
                continue;
            }
            if p2[a] == 0.0 {
                return Err(Error::UndefinedRatio);
            }
            value += dist[i] * weight * (p1[a] / p2[a] - 1.0).abs();
        }
    }
    Ok(value)
}

/// All (state, action) pairs of a trajectory batch, in order, up to
/// `limit`. This is the natural EARD probe for a dataset collected under
/// the behavior policy.
pub fn probe_from_trajectories(batch: &[Trajectory], limit: usize) -> Vec<(State, Action)> {
    batch
        .iter()
        .flat_map(|t| &t.steps)
        .take(limit)
        .map(|s| (s.state.clone(), s.action.clone()))
        .collect()
}

/// Sample fresh episodes under `policy` until `n` (state, action) pairs
/// are collected.
pub fn collect_probe<E: Environment + ?Sized>(
    env: &E,
    policy: &PolicyModel,
    n: usize,
    max_steps: usize,
    rng: &mut SeedRng,
) -> Result<Vec<(State, Action)>> {
    let mut probe = Vec::with_capacity(n);
    while probe.len() < n {
        let traj = sample_episode(env, policy, rng, max_steps)?;
        if traj.is_empty() {
            return Err(Error::DegenerateInput("environment produced an empty episode".into()));
        }
        for step in traj.steps {
            probe.push((step.state, step.action));
            if probe.len() == n {
                break;
            }
        }
    }
    Ok(probe)
}
