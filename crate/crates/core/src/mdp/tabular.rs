use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_categorical, Environment, Transition};
use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite MDP with dense transition and reward tables.
///
/// `transition` is row-major over `(s, a, s')`, `reward` over `(s, a)`.
/// Tabular MDPs have no terminal states; every rollout runs to its horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabularMdpDesc", into = "TabularMdpDesc")]
pub struct TabularMdp {
    states: usize,
    actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial_dist: Vec<f64>,
}

/// Text form of a [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularMdpDesc {
    pub states: usize,
    pub actions: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub initial_dist: Vec<f64>,
}

impl TryFrom<TabularMdpDesc> for TabularMdp {
    type Error = Error;

    fn try_from(d: TabularMdpDesc) -> Result<Self> {
        TabularMdp::new(d.states, d.actions, d.transition, d.reward, d.initial_dist)
    }
}

impl From<TabularMdp> for TabularMdpDesc {
    fn from(m: TabularMdp) -> Self {
        TabularMdpDesc {
            states: m.states,
            actions: m.actions,
            transition: m.transition,
            reward: m.reward,
            initial_dist: m.initial_dist,
        }
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidMdp(format!("{what} has negative or non-finite entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidMdp(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        states: usize,
        actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::InvalidMdp("need at least one state and one action".into()));
        }
        if transition.len() != states * actions * states {
            return Err(Error::InvalidMdp(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                states * actions * states
            )));
        }
        if reward.len() != states * actions {
            return Err(Error::InvalidMdp(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                states * actions
            )));
        }
        if initial_dist.len() != states {
            return Err(Error::InvalidMdp(format!(
                "initial_dist has {} entries, expected {states}",
                initial_dist.len()
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp("reward has non-finite entries".into()));
        }
        for s in 0..states {
            for a in 0..actions {
                let start = (s * actions + a) * states;
                check_distribution(
                    &transition[start..start + states],
                    &format!("transition row ({s}, {a})"),
                )?;
            }
        }
        check_distribution(&initial_dist, "initial_dist")?;
        Ok(Self {
            states,
            actions,
            transition,
            reward,
            initial_dist,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let desc: TabularMdpDesc = toml::from_str(text)?;
        desc.try_into()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&TabularMdpDesc::from(self.clone())).expect("plain data serializes")
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.actions + a) * self.states + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.transition[start..start + self.states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions + a]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }
}

impl Environment for TabularMdp {
    type State = usize;

    fn action_count(&self) -> usize {
        self.actions
    }

    fn reward_bound(&self) -> f64 {
        self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial_dist, rng)
    }

    fn step<R: Rng + ?Sized>(&self, state: &usize, action: usize, rng: &mut R) -> Result<Transition<usize>> {
        let s = *state;
        if s >= self.states {
            return Err(Error::InvalidState { state: s, count: self.states });
        }
        if action >= self.actions {
            return Err(Error::InvalidAction { action, count: self.actions });
        }
        Ok(Transition {
            next_state: sample_categorical(self.transition_row(s, action), rng),
            reward: self.reward(s, action),
            terminal: false,
        })
    }
}
