//! Deterministic pendulum swing-up, the native continuous-control stand-in.
//!
//! Classical formulation: state (angle, angular velocity), torque action
//! clipped to [-2, 2], reward = negative quadratic cost in angle,
//! velocity, and torque. No terminal state — the 200-step cap always
//! binds.

use crate::rng::SeedRng;
use rand::Rng;
use std::f64::consts::PI;

/// Pendulum dynamics and cost constants (classical swing-up values).
#[derive(Debug, Clone)]
pub struct PendulumEnv {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub max_steps: usize,
}

impl Default for PendulumEnv {
    fn default() -> Self {
        PendulumEnv {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            max_steps: 200,
        }
    }
}

/// Wrap an angle into [-pi, pi].
fn wrap_angle(theta: f64) -> f64 {
    let mut t = (theta + PI) % (2.0 * PI);
    if t < 0.0 {
        t += 2.0 * PI;
    }
    t - PI
}

impl PendulumEnv {
    /// Observation dimension (angle, angular velocity).
    pub const STATE_DIM: usize = 2;
    /// Action dimension (torque).
    pub const ACTION_DIM: usize = 1;

    /// Initial state: angle uniform in [-pi, pi], velocity uniform in
    /// [-1, 1], hanging anywhere with a small spin.
    pub fn reset(&self, rng: &mut SeedRng) -> [f64; 2] {
        [rng.gen_range(-PI..PI), rng.gen_range(-1.0..1.0)]
    }

    /// One deterministic Euler step. Returns (next_state, reward). The
    /// reward is the negative quadratic cost of the *current* state and
    /// the applied (clipped) torque.
    pub fn step(&self, state: [f64; 2], torque: f64) -> ([f64; 2], f64) {
        let [theta, theta_dot] = state;
        let u = torque.clamp(-self.max_torque, self.max_torque);
        let cost = wrap_angle(theta).powi(2) + 0.1 * theta_dot.powi(2) + 0.001 * u * u;
        let accel = 3.0 * self.gravity / (2.0 * self.length) * theta.sin()
            + 3.0 / (self.mass * self.length * self.length) * u;
        let new_dot = (theta_dot + accel * self.dt).clamp(-self.max_speed, self.max_speed);
        let new_theta = wrap_angle(theta + new_dot * self.dt);
        ([new_theta, new_dot], -cost)
    }
}
