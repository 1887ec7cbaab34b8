//! Cart-pole balancing with the standard benchmark physics.

use nalgebra::DVector;
use rand::Rng;

use super::{Environment, FeatureMap, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    /// Steps taken so far in the episode.
    pub steps: usize,
}

impl CartPoleState {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

/// Cart-pole with explicit Euler integration.
///
/// Reward is 1 for every step that keeps the pole up and 0 for the step that
/// fails. Reaching `max_steps` ends the episode without failure.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPole {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force_mag: f64,
    pub tau: f64,
    /// Failure angle in radians.
    pub angle_limit: f64,
    pub position_limit: f64,
    pub max_steps: usize,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            angle_limit: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            position_limit: 2.4,
            max_steps: 500,
        }
    }
}

impl CartPole {
    pub fn failed(&self, s: &CartPoleState) -> bool {
        s.x.abs() > self.position_limit || s.theta.abs() > self.angle_limit
    }
}

impl Environment for CartPole {
    type State = CartPoleState;

    fn action_count(&self) -> usize {
        2
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> CartPoleState {
        let mut draw = || rng.random_range(-0.05..0.05);
        CartPoleState {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
            steps: 0,
        }
    }

    fn step<R: Rng + ?Sized>(
        &self,
        s: &CartPoleState,
        action: usize,
        _rng: &mut R,
    ) -> Result<Transition<CartPoleState>> {
        if action >= 2 {
            return Err(Error::InvalidAction { action, count: 2 });
        }
        let force = if action == 1 { self.force_mag } else { -self.force_mag };
        let total_mass = self.cart_mass + self.pole_mass;
        let pole_ml = self.pole_mass * self.half_length;
        let (sin, cos) = s.theta.sin_cos();

        let temp = (force + pole_ml * s.theta_dot * s.theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pole_ml * theta_acc * cos / total_mass;

        let next = CartPoleState {
            x: s.x + self.tau * s.x_dot,
            x_dot: s.x_dot + self.tau * x_acc,
            theta: s.theta + self.tau * s.theta_dot,
            theta_dot: s.theta_dot + self.tau * theta_acc,
            steps: s.steps + 1,
        };
        let failed = self.failed(&next);
        Ok(Transition {
            next_state: next,
            reward: if failed { 0.0 } else { 1.0 },
            terminal: failed || next.steps >= self.max_steps,
        })
    }
}

/// Block features for the cart-pole log-linear policy.
///
/// The normalized state occupies the block of the chosen action in an
/// 8-vector. Position and angle are divided by their failure bounds,
/// velocities by fixed scales; every component is clamped to `[-1, 1]`, so
/// the feature norm is at most 2.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleFeatures {
    pub scales: [f64; 4],
}

impl CartPoleFeatures {
    pub const VELOCITY_SCALE: f64 = 2.0;
    pub const ANGULAR_VELOCITY_SCALE: f64 = 3.0;

    pub fn new(env: &CartPole) -> Self {
        Self {
            scales: [
                env.position_limit,
                Self::VELOCITY_SCALE,
                env.angle_limit,
                Self::ANGULAR_VELOCITY_SCALE,
            ],
        }
    }
}

impl FeatureMap<CartPoleState> for CartPoleFeatures {
    fn dim(&self) -> usize {
        8
    }

    fn action_count(&self) -> usize {
        2
    }

    fn features(&self, state: &CartPoleState, action: usize) -> DVector<f64> {
        let mut phi = DVector::zeros(8);
        for (i, (v, scale)) in state.as_array().iter().zip(self.scales).enumerate() {
            phi[4 * action + i] = (v / scale).clamp(-1.0, 1.0);
        }
        phi
    }

    fn norm_bound(&self) -> f64 {
        2.0
    }
}
