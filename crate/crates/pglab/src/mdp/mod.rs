//! Episodic MDP abstractions and exact dynamic-programming oracles.
//!
//! A [`TabularMdp`] carries explicit transition and reward tensors plus a
//! dedicated terminal absorbing state. On top of it live the exact
//! occupancy measures (discounted and undiscounted visit sums), the exact
//! action-value and return oracles, the closed-form alias MDP, a native
//! pendulum environment, and seeded trajectory sampling.

mod alias;
mod pendulum;
mod sample;
mod trajectory;

pub use alias::{
    alias_fixed_points, chain_mdp, AliasFixedPoints, AliasMdp, ACT_GO, ACT_STOP, ALIAS_S1,
    ALIAS_S2, ALIAS_TERMINAL,
};
pub use pendulum::PendulumEnv;
pub use sample::{sample_batch, sample_episode, Environment, DEFAULT_MAX_STEPS};
pub use trajectory::{
    read_trajectories, write_trajectories, Action, State, Step, Trajectory,
};

use crate::error::{Error, Result};
use crate::rng::SeedRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Policy lookup table: `probs[state][action]`, rows are distributions.
pub type PolicyTable = Vec<Vec<f64>>;

const ROW_SUM_TOL: f64 = 1e-12;
/// Horizon for the bounded-horizon episodicity test.
const EPISODIC_HORIZON: usize = 10_000;
const EPISODIC_TOL: f64 = 1e-9;
/// Iteration cap for the occupancy recursion.
const OCCUPANCY_MAX_ITERS: usize = 2_000_000;
const OCCUPANCY_TOL: f64 = 1e-12;

/// State weighting used by an occupancy measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyMode {
    /// `sum_k gamma^k Pr(s_k = s)` — the weighting the policy-gradient
    /// theorem requires.
    Discounted,
    /// `sum_k Pr(s_k = s)` — expected visit counts, the weighting naive
    /// implementations actually sample.
    Undiscounted,
}

/// Unnormalized occupancy weights over non-terminal states.
///
/// The values are sums of per-step visit probabilities, not a
/// distribution; call [`OccupancyWeights::normalized`] where an
/// expectation over states is needed.
#[derive(Debug, Clone)]
pub struct OccupancyWeights {
    pub weights: Vec<f64>,
    pub mode: OccupancyMode,
}

impl OccupancyWeights {
    /// Total mass of the weights.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The weights rescaled into a probability distribution.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        self.weights.iter().map(|w| w / total).collect()
    }
}

/// An episodic MDP with explicit tensors and a terminal absorbing state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TabularMdpData", into = "TabularMdpData")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `transition[s][a][s']`
    transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`
    reward: Vec<Vec<f64>>,
    gamma: f64,
    initial_dist: Vec<f64>,
    terminal: usize,
}

/// Wire format for [`TabularMdp`]; validation runs on deserialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TabularMdpData {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    gamma: f64,
    initial_dist: Vec<f64>,
    terminal_index: usize,
}

impl TryFrom<TabularMdpData> for TabularMdp {
    type Error = Error;

    fn try_from(d: TabularMdpData) -> Result<Self> {
        Self::new(
            d.n_states,
            d.n_actions,
            d.transition,
            d.reward,
            d.gamma,
            d.initial_dist,
            d.terminal_index,
        )
    }
}

impl From<TabularMdp> for TabularMdpData {
    fn from(m: TabularMdp) -> Self {
        TabularMdpData {
            n_states: m.n_states,
            n_actions: m.n_actions,
            transition: m.transition,
            reward: m.reward,
            gamma: m.gamma,
            initial_dist: m.initial_dist,
            terminal_index: m.terminal,
        }
    }
}

impl TabularMdp {
    /// Build and validate an episodic MDP.
    ///
    /// Checks row normalization, the absorbing zero-reward terminal, the
    /// initial distribution, and episodicity (a bounded-horizon mass test
    /// under the uniform policy).
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
        initial_dist: Vec<f64>,
        terminal: usize,
    ) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::InvalidMdp("need at least one non-terminal state".into()));
        }
        if terminal >= n_states {
            return Err(Error::InvalidMdp("terminal index out of range".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("gamma {gamma} outside [0,1)")));
        }
        if transition.len() != n_states || reward.len() != n_states {
            return Err(Error::InvalidMdp("tensor leading dimension != n_states".into()));
        }
        for s in 0..n_states {
            if transition[s].len() != n_actions || reward[s].len() != n_actions {
                return Err(Error::InvalidMdp(format!("state {s}: action dimension mismatch")));
            }
            for a in 0..n_actions {
                let row = &transition[s][a];
                if row.len() != n_states {
                    return Err(Error::InvalidMdp(format!("({s},{a}): next-state dimension mismatch")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|p| *p < 0.0) {
                    return Err(Error::InvalidMdp(format!(
                        "transition row ({s},{a}) is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        for a in 0..n_actions {
            if (transition[terminal][a][terminal] - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMdp("terminal state must self-loop with probability 1".into()));
            }
            if reward[terminal][a] != 0.0 {
                return Err(Error::InvalidMdp("terminal state must yield zero reward".into()));
            }
        }
        if initial_dist.len() != n_states {
            return Err(Error::InvalidMdp("initial_dist dimension mismatch".into()));
        }
        let p0_sum: f64 = initial_dist.iter().sum();
        if (p0_sum - 1.0).abs() > ROW_SUM_TOL || initial_dist.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidMdp("initial_dist is not a distribution".into()));
        }
        if initial_dist[terminal] != 0.0 {
            return Err(Error::InvalidMdp("initial_dist must put zero mass on terminal".into()));
        }

        let mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial_dist,
            terminal,
        };
        mdp.check_episodic()?;
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[s][a][next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    /// Indices of the non-terminal states, in ascending order.
    pub fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|s| *s != self.terminal).collect()
    }

    /// Return a copy with every reward zeroed.
    pub fn with_zero_rewards(&self) -> TabularMdp {
        let mut m = self.clone();
        for row in &mut m.reward {
            row.fill(0.0);
        }
        m
    }

    /// Bounded-horizon episodicity test: starting uniformly over the
    /// non-terminal states, under the uniform policy the probability of
    /// still being outside the terminal state after `EPISODIC_HORIZON`
    /// steps must be negligible.
    fn check_episodic(&self) -> Result<()> {
        let uniform = vec![vec![1.0 / self.n_actions as f64; self.n_actions]; self.n_states];
        let p = self.policy_transition(&uniform);
        let mut dist = vec![1.0 / (self.n_states - 1) as f64; self.n_states];
        dist[self.terminal] = 0.0;
        let mut scratch = vec![0.0; self.n_states];
        for _ in 0..EPISODIC_HORIZON {
            scratch.fill(0.0);
            for s in 0..self.n_states {
                if dist[s] == 0.0 {
                    continue;
                }
                for (next, prob) in p[s].iter().enumerate() {
                    scratch[next] += dist[s] * prob;
                }
            }
            std::mem::swap(&mut dist, &mut scratch);
            if 1.0 - dist[self.terminal] < EPISODIC_TOL {
                return Ok(());
            }
        }
        let residual = 1.0 - dist[self.terminal];
        Err(Error::NonEpisodic(format!(
            "non-terminal mass {residual:.3e} after {EPISODIC_HORIZON} steps under the uniform policy"
        )))
    }

    fn check_policy(&self, policy: &[Vec<f64>]) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} rows, MDP has {} states",
                policy.len(),
                self.n_states
            )));
        }
        for (s, row) in policy.iter().enumerate() {
            if s == self.terminal {
                continue;
            }
            if row.len() != self.n_actions {
                return Err(Error::DimensionMismatch(format!("policy row {s} length")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::InvalidMdp(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(())
    }

    /// State-to-state transition matrix under a policy:
    /// `P_pi[s][s'] = sum_a pi(a|s) P(s'|s,a)`.
    fn policy_transition(&self, policy: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut p = vec![vec![0.0; self.n_states]; self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let pa = policy[s][a];
                if pa == 0.0 {
                    continue;
                }
                for next in 0..self.n_states {
                    p[s][next] += pa * self.transition[s][a][next];
                }
            }
        }
        p
    }

    /// Occupancy weights `sum_k c^k Pr(s_k = s)` over non-terminal states,
    /// with `c = gamma` (discounted) or `c = 1` (undiscounted).
    ///
    /// Computed twice — by iterating the state-marginal recursion and by
    /// solving the linear system on the non-terminal block — and the two
    /// answers must agree within 1e-9.
    pub fn occupancy(&self, policy: &PolicyTable, mode: OccupancyMode) -> Result<OccupancyWeights> {
        self.check_policy(policy)?;
        let c = match mode {
            OccupancyMode::Discounted => self.gamma,
            OccupancyMode::Undiscounted => 1.0,
        };
        let iterated = self.occupancy_iterated(policy, c)?;
        let solved = self.occupancy_solved(policy, c)?;
        for (s, (&a, &b)) in iterated.iter().zip(solved.iter()).enumerate() {
            if (a - b).abs() > 1e-9 {
                return Err(Error::NonEpisodic(format!(
                    "occupancy methods disagree at state {s}: iterated {a}, solved {b}"
                )));
            }
        }
        // Keep the linear-solve answer; it is exact up to solver precision.
        let nt = self.non_terminal_states();
        let weights = nt.iter().map(|&s| solved[s]).collect();
        Ok(OccupancyWeights { weights, mode })
    }

    fn occupancy_iterated(&self, policy: &PolicyTable, c: f64) -> Result<Vec<f64>> {
        let p = self.policy_transition(policy);
        let mut occ = vec![0.0; self.n_states];
        let mut dist = self.initial_dist.clone();
        let mut factor = 1.0;
        let mut scratch = vec![0.0; self.n_states];
        for _ in 0..OCCUPANCY_MAX_ITERS {
            let mut added = 0.0;
            for s in 0..self.n_states {
                if s == self.terminal {
                    continue;
                }
                let inc = factor * dist[s];
                occ[s] += inc;
                added += inc;
            }
            if added < OCCUPANCY_TOL {
                occ[self.terminal] = 0.0;
                return Ok(occ);
            }
            scratch.fill(0.0);
            for s in 0..self.n_states {
                if dist[s] == 0.0 {
                    continue;
                }
                for (next, prob) in p[s].iter().enumerate() {
                    scratch[next] += dist[s] * prob;
                }
            }
            std::mem::swap(&mut dist, &mut scratch);
            factor *= c;
        }
        Err(Error::NonEpisodic(format!(
            "occupancy recursion did not converge within {OCCUPANCY_MAX_ITERS} iterations"
        )))
    }

    /// Solve `(I - c P_pi^T) d = p0` restricted to non-terminal states.
    fn occupancy_solved(&self, policy: &PolicyTable, c: f64) -> Result<Vec<f64>> {
        let p = self.policy_transition(policy);
        let nt = self.non_terminal_states();
        let n = nt.len();
        let a = DMatrix::from_fn(n, n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            // Transposed: mass flowing INTO nt[i] from nt[j].
            delta - c * p[nt[j]][nt[i]]
        });
        let b = DVector::from_fn(n, |i, _| self.initial_dist[nt[i]]);
        let d = a
            .lu()
            .solve(&b)
            .ok_or(Error::SingularSystem { context: "occupancy" })?;
        let mut full = vec![0.0; self.n_states];
        for (i, &s) in nt.iter().enumerate() {
            full[s] = d[i];
        }
        Ok(full)
    }

    /// Exact state values under a policy, solved to fixed point:
    /// `v = r_pi + gamma P_pi v`, with `v(terminal) = 0`.
    pub fn exact_v(&self, policy: &PolicyTable) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let p = self.policy_transition(policy);
        let nt = self.non_terminal_states();
        let n = nt.len();
        let a = DMatrix::from_fn(n, n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - self.gamma * p[nt[i]][nt[j]]
        });
        let b = DVector::from_fn(n, |i, _| {
            let s = nt[i];
            (0..self.n_actions).map(|act| policy[s][act] * self.reward[s][act]).sum()
        });
        let v = a
            .lu()
            .solve(&b)
            .ok_or(Error::SingularSystem { context: "state values" })?;
        let mut full = vec![0.0; self.n_states];
        for (i, &s) in nt.iter().enumerate() {
            full[s] = v[i];
        }
        Ok(full)
    }

    /// Exact q-table: `q(s,a) = R(s,a) + gamma sum_s' P(s'|s,a) v(s')`,
    /// with `q(terminal, .) = 0`.
    pub fn exact_q(&self, policy: &PolicyTable) -> Result<Vec<Vec<f64>>> {
        let v = self.exact_v(policy)?;
        let mut q = vec![vec![0.0; self.n_actions]; self.n_states];
        for s in 0..self.n_states {
            if s == self.terminal {
                continue;
            }
            for a in 0..self.n_actions {
                let future: f64 = self.transition[s][a]
                    .iter()
                    .zip(v.iter())
                    .map(|(p, v)| p * v)
                    .sum();
                q[s][a] = self.reward[s][a] + self.gamma * future;
            }
        }
        Ok(q)
    }

    /// Expected discounted return `rho = sum_s p0(s) v_pi(s)`.
    pub fn exact_return(&self, policy: &PolicyTable) -> Result<f64> {
        let v = self.exact_v(policy)?;
        Ok(self.initial_dist.iter().zip(v.iter()).map(|(p, v)| p * v).sum())
    }
}

/// Random episodic MDP for property tests: Dirichlet(1) transition rows
/// with 5% of the mass rerouted to the terminal state (which guarantees
/// episodicity under every policy) and uniform `[-1, 1]` rewards.
pub fn random_episodic_mdp(
    rng: &mut SeedRng,
    n_non_terminal: usize,
    n_actions: usize,
    gamma: f64,
) -> TabularMdp {
    let n_states = n_non_terminal + 1;
    let terminal = n_non_terminal;
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_non_terminal {
        for a in 0..n_actions {
            // Dirichlet(1) row via normalized Exp(1) draws.
            let draws: Vec<f64> = (0..n_states)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = draws.iter().sum();
            for (next, d) in draws.iter().enumerate() {
                transition[s][a][next] = 0.95 * d / total;
            }
            transition[s][a][terminal] += 0.05;
            // Exact renormalization so validation at 1e-12 always passes.
            let sum: f64 = transition[s][a].iter().sum();
            for p in &mut transition[s][a] {
                *p /= sum;
            }
            reward[s][a] = rng.gen_range(-1.0..1.0);
        }
    }
    for a in 0..n_actions {
        transition[terminal][a][terminal] = 1.0;
    }
    let mut initial = vec![1.0 / n_non_terminal as f64; n_states];
    initial[terminal] = 0.0;
    let correction: f64 = initial.iter().sum::<f64>();
    for p in &mut initial {
        *p /= correction;
    }
    TabularMdp::new(n_states, n_actions, transition, reward, gamma, initial, terminal)
        .expect("generator produces valid episodic MDPs")
}

/// Random policy table with Dirichlet(1) rows, for property tests.
pub fn random_policy(rng: &mut SeedRng, n_states: usize, n_actions: usize) -> PolicyTable {
    (0..n_states)
        .map(|_| {
            let draws: Vec<f64> = (0..n_actions)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = draws.iter().sum();
            draws.iter().map(|d| d / total).collect()
        })
        .collect()
}
