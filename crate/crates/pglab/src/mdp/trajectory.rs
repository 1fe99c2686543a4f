//! Trajectories and their line-delimited JSON log format.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// An environment state: a discrete index or a continuous vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum State {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl State {
    /// Discrete index; panics if continuous (caller knows the env kind).
    pub fn index(&self) -> usize {
        match self {
            State::Discrete(i) => *i,
            State::Continuous(_) => panic!("continuous state used where an index was expected"),
        }
    }

    /// Continuous coordinates, or the index as a 1-vector.
    pub fn coords(&self) -> Vec<f64> {
        match self {
            State::Discrete(i) => vec![*i as f64],
            State::Continuous(v) => v.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            State::Discrete(_) => true,
            State::Continuous(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

/// An action: a discrete index or a continuous vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> usize {
        match self {
            Action::Discrete(i) => *i,
            Action::Continuous(_) => panic!("continuous action used where an index was expected"),
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        match self {
            Action::Discrete(i) => vec![*i as f64],
            Action::Continuous(v) => v.clone(),
        }
    }
}

/// One transition of an episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    /// Log-probability under the policy that generated the episode,
    /// recorded at sampling time.
    pub behavior_log_prob: f64,
    /// Position within the episode (0-based).
    pub timestep: usize,
}

/// A sampled episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// True when the episode hit the step cap instead of the terminal
    /// state.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Check the structural invariants: consecutive 0-based timesteps and
    /// finite log-probs.
    pub fn validate(&self) -> Result<()> {
        for (k, step) in self.steps.iter().enumerate() {
            if step.timestep != k {
                return Err(Error::InvalidMdp(format!(
                    "trajectory timestep {} at position {k}",
                    step.timestep
                )));
            }
            if !step.behavior_log_prob.is_finite() {
                return Err(Error::NonFinite(format!("behavior_log_prob at step {k}")));
            }
        }
        Ok(())
    }
}

/// Write a batch of trajectories as line-delimited JSON.
pub fn write_trajectories<W: Write>(mut w: W, batch: &[Trajectory]) -> Result<()> {
    for traj in batch {
        serde_json::to_writer(&mut w, traj)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a line-delimited JSON trajectory log (blank lines skipped).
pub fn read_trajectories<R: BufRead>(r: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let traj: Trajectory = serde_json::from_str(&line)?;
        traj.validate()?;
        out.push(traj);
    }
    Ok(out)
}
