//! Environments, trajectories, and differentiable policies.

mod cartpole;
mod policy;
mod tabular;

pub use cartpole::{CartPole, CartPoleFeatures, CartPoleState};
pub use policy::{
    policy_derivative_bounds, DerivativeBounds, DifferentiablePolicy, FeatureMap, LogLinearPolicy,
    TabularFeatures,
};
pub use tabular::TabularMdp;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::check_finite_vec;

/// Result of one environment transition.
#[derive(Debug, Clone)]
pub struct Transition<S> {
    pub next_state: S,
    pub reward: f64,
    pub terminal: bool,
}

/// A Markov decision process that can be simulated.
///
/// Implementations are immutable descriptions; all per-rollout state lives in
/// `State` values, so one environment may be shared across threads.
pub trait Environment: Sync {
    type State: Clone + Send + Sync + std::fmt::Debug;

    fn action_count(&self) -> usize;

    /// Upper bound on `|r(s, a)|` over reachable pairs.
    fn reward_bound(&self) -> f64;

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition<Self::State>>;
}

/// One rollout truncated at `horizon` steps.
///
/// `rewards` are environment rewards as emitted. Optimization works with
/// costs, `cost(k) = -rewards[k]`, and minimizes their expected discounted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub horizon: usize,
    /// The rollout ended in a terminal state before reaching `horizon`
    /// (or exactly at it).
    pub terminated: bool,
}

impl<S> Trajectory<S> {
    /// Number of realized steps, always `<= horizon`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn cost(&self, k: usize) -> f64 {
        -self.rewards[k]
    }

    /// `sum_{k < min(len, horizon)} gamma^k r_k`.
    pub fn discounted_return(&self, gamma: f64, horizon: usize) -> f64 {
        let mut discount = 1.0;
        let mut total = 0.0;
        for r in self.rewards.iter().take(horizon) {
            total += discount * r;
            discount *= gamma;
        }
        total
    }

    pub fn discounted_cost(&self, gamma: f64, horizon: usize) -> f64 {
        -self.discounted_return(gamma, horizon)
    }
}

/// Draw from a categorical distribution by inverse CDF.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Roll out `policy` at `theta` for at most `horizon` steps.
///
/// Stops early at terminal states. The result is a deterministic function of
/// the generator state.
pub fn sample_trajectory<E, P, R>(
    env: &E,
    policy: &P,
    theta: &DVector<f64>,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory<E::State>>
where
    E: Environment + ?Sized,
    P: DifferentiablePolicy<E::State> + ?Sized,
    R: Rng + ?Sized,
{
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be at least 1".into(),
        });
    }
    if theta.len() != policy.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: policy.param_dim(),
            actual: theta.len(),
        });
    }
    check_finite_vec(theta, "theta")?;

    let mut state = env.reset(rng);
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon.min(1024) + 1),
        actions: Vec::with_capacity(horizon.min(1024)),
        rewards: Vec::with_capacity(horizon.min(1024)),
        horizon,
        terminated: false,
    };
    for _ in 0..horizon {
        let probs = policy.action_probs(theta, &state);
        let action = sample_categorical(&probs, rng);
        let tr = env.step(&state, action, rng)?;
        traj.states.push(state);
        traj.actions.push(action);
        traj.rewards.push(tr.reward);
        state = tr.next_state;
        if tr.terminal {
            traj.terminated = true;
            break;
        }
    }
    traj.states.push(state);
    Ok(traj)
}
