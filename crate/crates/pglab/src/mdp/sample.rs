//! Seeded episode sampling over tabular and continuous environments.

use super::trajectory::{Action, State, Step, Trajectory};
use super::{PendulumEnv, TabularMdp};
use crate::error::{Error, Result};
use crate::policy::PolicyModel;
use crate::rng::{sample_index, SeedRng};

/// Default episode cap.
pub const DEFAULT_MAX_STEPS: usize = 200;

/// Anything trajectories can be sampled from.
pub trait Environment: Sync {
    fn reset(&self, rng: &mut SeedRng) -> State;
    /// Advance one step; returns (next_state, reward, reached_terminal).
    fn step(&self, state: &State, action: &Action, rng: &mut SeedRng) -> Result<(State, f64, bool)>;
}

impl Environment for TabularMdp {
    fn reset(&self, rng: &mut SeedRng) -> State {
        State::Discrete(sample_index(rng, self.initial_dist()))
    }

    fn step(&self, state: &State, action: &Action, rng: &mut SeedRng) -> Result<(State, f64, bool)> {
        let s = state.index();
        let a = action.index();
        if s >= self.n_states() || a >= self.n_actions() {
            return Err(Error::DimensionMismatch(format!(
                "step at state {s}, action {a} outside {}x{}",
                self.n_states(),
                self.n_actions()
            )));
        }
        let row: Vec<f64> = (0..self.n_states())
            .map(|next| self.transition_prob(s, a, next))
            .collect();
        let next = sample_index(rng, &row);
        Ok((State::Discrete(next), self.reward(s, a), next == self.terminal()))
    }
}

impl Environment for PendulumEnv {
    fn reset(&self, rng: &mut SeedRng) -> State {
        let s = PendulumEnv::reset(self, rng);
        State::Continuous(s.to_vec())
    }

    fn step(&self, state: &State, action: &Action, _rng: &mut SeedRng) -> Result<(State, f64, bool)> {
        let coords = state.coords();
        if coords.len() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "pendulum state has {} coordinates",
                coords.len()
            )));
        }
        let torque = action.coords()[0];
        let (next, reward) = PendulumEnv::step(self, [coords[0], coords[1]], torque);
        if !next.iter().all(|x| x.is_finite()) || !reward.is_finite() {
            return Err(Error::NonFinite("pendulum transition".into()));
        }
        Ok((State::Continuous(next.to_vec()), reward, false))
    }
}

/// Roll out one episode: alternate `a ~ pi(.|s)` and `s' ~ P(.|s,a)`,
/// stopping at the terminal state or after `max_steps` (which sets the
/// `truncated` flag). The behavior log-prob is recorded at sampling time.
pub fn sample_episode<E: Environment + ?Sized>(
    env: &E,
    policy: &PolicyModel,
    rng: &mut SeedRng,
    max_steps: usize,
) -> Result<Trajectory> {
    let mut state = env.reset(rng);
    let mut steps = Vec::new();
    for k in 0..max_steps {
        if !state.is_finite() {
            return Err(Error::NonFinite(format!("state at step {k}")));
        }
        let (action, log_prob) = policy.sample_action(&state, rng)?;
        if !log_prob.is_finite() {
            return Err(Error::NonFinite(format!("behavior log-prob at step {k}")));
        }
        let (next, reward, done) = env.step(&state, &action, rng)?;
        steps.push(Step {
            state,
            action,
            reward,
            behavior_log_prob: log_prob,
            timestep: k,
        });
        if done {
            return Ok(Trajectory { steps, truncated: false });
        }
        state = next;
    }
    Ok(Trajectory { steps, truncated: true })
}

/// Roll out `n` episodes from one stream.
pub fn sample_batch<E: Environment + ?Sized>(
    env: &E,
    policy: &PolicyModel,
    rng: &mut SeedRng,
    n: usize,
    max_steps: usize,
) -> Result<Vec<Trajectory>> {
    (0..n).map(|_| sample_episode(env, policy, rng, max_steps)).collect()
}
