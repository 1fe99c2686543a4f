//! The two-state aliased MDP with closed-form fixed points.
//!
//! Two non-terminal states share one action set. The *go* action advances
//! from the first state to the second but is worthless in the second; the
//! *stop* action is worthless in the first state but collects the only
//! reward (1) in the second. A policy that cannot tell the states apart —
//! one parameter `theta = P(go)` used in both — exposes the difference
//! between discounted and undiscounted state weighting as a difference in
//! closed-form stationary points.

use super::{OccupancyMode, TabularMdp};
use crate::error::{Error, Result};

/// Action index of the shared "go" action (advance / spend).
pub const ACT_GO: usize = 0;
/// Action index of the shared "stop" action (quit / collect).
pub const ACT_STOP: usize = 1;

/// Closed-form stationary points of the tied (aliased) policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasFixedPoints {
    /// Stationary point under discounted weighting: 1/2.
    pub unbiased: f64,
    /// Stationary point under undiscounted weighting: gamma / (1 + gamma).
    pub biased: f64,
    /// Return at the biased point divided by the optimal tied return:
    /// 4 gamma / (1 + gamma)^2.
    pub decay_ratio: f64,
}

/// Closed-form fixed points for discount `gamma` in (0, 1).
pub fn alias_fixed_points(gamma: f64) -> Result<AliasFixedPoints> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma {gamma} outside (0, 1)")));
    }
    Ok(AliasFixedPoints {
        unbiased: 0.5,
        biased: gamma / (1.0 + gamma),
        decay_ratio: 4.0 * gamma / ((1.0 + gamma) * (1.0 + gamma)),
    })
}

/// The aliased MDP plus its analytic quantities.
#[derive(Debug, Clone)]
pub struct AliasMdp {
    mdp: TabularMdp,
    /// Alias tolerance: how far apart the two states' action
    /// distributions may drift, `max_a |pi(a|s1) - pi(a|s2)| <= epsilon`.
    /// Zero means fully tied (p = q).
    epsilon: f64,
}

/// First state (always visited).
pub const ALIAS_S1: usize = 0;
/// Second state (reached only via *go*).
pub const ALIAS_S2: usize = 1;
/// Terminal state index.
pub const ALIAS_TERMINAL: usize = 2;

impl AliasMdp {
    /// Fully tied variant (`epsilon = 0`).
    pub fn new(gamma: f64) -> Result<Self> {
        Self::with_epsilon(gamma, 0.0)
    }

    /// Variant whose alias constraint has slack `epsilon` (must satisfy
    /// `0 <= epsilon < gamma`).
    pub fn with_epsilon(gamma: f64, epsilon: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Domain(format!("gamma {gamma} outside (0, 1)")));
        }
        if !(0.0..1.0).contains(&epsilon) || epsilon >= gamma {
            return Err(Error::Domain(format!(
                "alias tolerance {epsilon} must lie in [0, gamma)"
            )));
        }
        let n = 3;
        let mut transition = vec![vec![vec![0.0; n]; 2]; n];
        let mut reward = vec![vec![0.0; 2]; n];
        // s1: go -> s2, stop -> terminal; both reward 0.
        transition[ALIAS_S1][ACT_GO][ALIAS_S2] = 1.0;
        transition[ALIAS_S1][ACT_STOP][ALIAS_TERMINAL] = 1.0;
        // s2: go -> terminal with reward 0 (the wasted move),
        //     stop -> terminal with reward 1 (the collect).
        transition[ALIAS_S2][ACT_GO][ALIAS_TERMINAL] = 1.0;
        transition[ALIAS_S2][ACT_STOP][ALIAS_TERMINAL] = 1.0;
        reward[ALIAS_S2][ACT_STOP] = 1.0;
        // Terminal self-loops.
        transition[ALIAS_TERMINAL][ACT_GO][ALIAS_TERMINAL] = 1.0;
        transition[ALIAS_TERMINAL][ACT_STOP][ALIAS_TERMINAL] = 1.0;
        let initial = vec![1.0, 0.0, 0.0];
        let mdp = TabularMdp::new(n, 2, transition, reward, gamma, initial, ALIAS_TERMINAL)?;
        Ok(AliasMdp { mdp, epsilon })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Whether go-probabilities (p, q) respect the alias constraint
    /// `max_a |pi(a|s1) - pi(a|s2)| <= epsilon`.
    pub fn respects_alias(&self, p: f64, q: f64) -> bool {
        (p - q).abs() <= self.epsilon + 1e-15
    }

    /// Policy table for go-probabilities `p` (in s1) and `q` (in s2).
    pub fn policy(&self, p: f64, q: f64) -> Vec<Vec<f64>> {
        vec![
            vec![p, 1.0 - p],
            vec![q, 1.0 - q],
            vec![0.5, 0.5], // terminal row; never used
        ]
    }

    /// Expected discounted return: `rho(p, q) = p (1 - q) gamma`.
    pub fn exact_return(&self, p: f64, q: f64) -> f64 {
        p * (1.0 - q) * self.gamma()
    }

    /// Exact gradient of the return in the tied (single-theta) policy,
    /// under the given state weighting:
    /// discounted `gamma (1 - 2 theta)`, undiscounted
    /// `gamma - (1 + gamma) theta`.
    pub fn exact_tied_gradient(&self, theta: f64, mode: OccupancyMode) -> f64 {
        let g = self.gamma();
        match mode {
            OccupancyMode::Discounted => g * (1.0 - 2.0 * theta),
            OccupancyMode::Undiscounted => g - (1.0 + g) * theta,
        }
    }

    /// Tied-policy stationary point when the second state's occupancy is
    /// reweighted by `w` (undiscounted weighting): `gamma / (w + gamma)`.
    ///
    /// `w = 1` recovers the plain undiscounted point; `w = gamma`
    /// recovers 1/2.
    pub fn reweighted_biased_fixed_point(&self, w: f64) -> Result<f64> {
        if w <= 0.0 {
            return Err(Error::Domain(format!("occupancy weight {w} must be positive")));
        }
        Ok(self.gamma() / (w + self.gamma()))
    }
}

/// A linear chain environment: `n_states` non-terminal cells in a row.
/// *Go* advances one cell (reward 0) and collects `goal_reward` when it
/// steps off the far end; *stop* terminates immediately with
/// `quit_reward`. Distinguishable states (one-hot), so unlike the alias
/// MDP a tabular policy can represent the optimum.
pub fn chain_mdp(n_states: usize, gamma: f64, quit_reward: f64, goal_reward: f64) -> Result<TabularMdp> {
    if n_states == 0 {
        return Err(Error::Domain("chain needs at least one cell".into()));
    }
    let n = n_states + 1;
    let terminal = n_states;
    let mut transition = vec![vec![vec![0.0; n]; 2]; n];
    let mut reward = vec![vec![0.0; 2]; n];
    for s in 0..n_states {
        let next = if s + 1 < n_states { s + 1 } else { terminal };
        transition[s][ACT_GO][next] = 1.0;
        transition[s][ACT_STOP][terminal] = 1.0;
        reward[s][ACT_STOP] = quit_reward;
        if s + 1 == n_states {
            reward[s][ACT_GO] = goal_reward;
        }
    }
    transition[terminal][ACT_GO][terminal] = 1.0;
    transition[terminal][ACT_STOP][terminal] = 1.0;
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    TabularMdp::new(n, 2, transition, reward, gamma, initial, terminal)
}
