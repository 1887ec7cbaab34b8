//! Sources of gradient, Hessian and correction estimates for the optimizer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::config::SampleUnit;
use crate::error::{Error, Result};
use crate::estimators::{grad_estimate, hess_estimate, hvp_correction_term};
use crate::linalg::pairwise_sum_vec;
use crate::mdp::{sample_trajectory, DifferentiablePolicy, Environment, TabularMdp, Trajectory};
use crate::oracle::exact_derivatives;
use crate::rng::{Purpose, StreamKey};

/// Running account of samples charged against an optional cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    cap: Option<u64>,
    unit: SampleUnit,
    used: u64,
    reserve: u64,
}

impl Budget {
    pub fn new(cap: Option<u64>, unit: SampleUnit) -> Self {
        Self { cap, unit, used: 0, reserve: 0 }
    }

    pub fn unlimited() -> Self {
        Self::new(None, SampleUnit::Trajectories)
    }

    /// Charged so far, in the budget's unit.
    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn remaining(&self) -> Option<u64> {
        self.cap.map(|c| c.saturating_sub(self.used))
    }

    pub fn exhausted(&self) -> bool {
        self.remaining() == Some(0)
    }

    /// Hold back `amount` (in the budget's unit) from subsequent draws, so a
    /// later batch in the same iteration is guaranteed room.
    pub fn set_reserve(&mut self, amount: u64) {
        self.reserve = amount;
    }

    fn available(&self) -> Option<u64> {
        self.remaining().map(|r| r.saturating_sub(self.reserve))
    }

    /// How many of `n` requested trajectories may be drawn. Step budgets are
    /// settled afterwards by [`Budget::commit`].
    fn request(&self, n: u64) -> u64 {
        match (self.available(), self.unit) {
            (None, _) => n,
            (Some(r), SampleUnit::Trajectories) => n.min(r),
            (Some(0), SampleUnit::Steps) => 0,
            (Some(_), SampleUnit::Steps) => n,
        }
    }

    /// Charge drawn trajectories in order and return how many fit.
    fn commit(&mut self, lengths: impl IntoIterator<Item = usize>) -> usize {
        let mut accepted = 0;
        for len in lengths {
            let cost = match self.unit {
                SampleUnit::Trajectories => 1,
                SampleUnit::Steps => len as u64,
            };
            if let Some(r) = self.available() {
                if cost > r {
                    break;
                }
            }
            self.used += cost;
            accepted += 1;
        }
        accepted
    }
}

/// An estimate together with the sampling effort behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub value: T,
    /// Trajectories consumed.
    pub samples: u64,
    /// Environment steps consumed.
    pub steps: u64,
    /// Estimated `J_H` at the evaluation point (cost convention), when the
    /// batch was drawn there.
    pub objective: Option<f64>,
    /// Fewer trajectories than requested fit in the budget.
    pub truncated: bool,
}

/// Final-policy evaluation, reported as a discounted return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub stderr: f64,
    pub samples: u64,
}

/// Where the optimizer gets its derivative information.
///
/// Every method returns `Ok(None)` when the budget grants no sample at all.
/// `iteration` and `root` address the random streams so that results do not
/// depend on scheduling.
pub trait EstimateProvider: Sync {
    fn dim(&self) -> usize;

    fn gradient(&self, theta: &DVector<f64>, n: u64, root: StreamKey, iteration: u64, budget: &mut Budget) -> Result<Option<Batch<DVector<f64>>>>;

    fn hessian(&self, theta: &DVector<f64>, n: u64, root: StreamKey, iteration: u64, budget: &mut Budget) -> Result<Option<Batch<DMatrix<f64>>>>;

    /// Mean of `n` Hessian-vector-product corrections, an unbiased estimate
    /// of `grad J(theta_t) - grad J(theta_t - h_prev)`.
    fn correction(
        &self,
        theta_t: &DVector<f64>,
        h_prev: &DVector<f64>,
        n: u64,
        root: StreamKey,
        iteration: u64,
        budget: &mut Budget,
    ) -> Result<Option<Batch<DVector<f64>>>>;

    fn evaluate(&self, theta: &DVector<f64>, n: u64, root: StreamKey) -> Result<Evaluation>;
}

/// Accepted trajectories and whether the budget cut the batch short.
type Drawn<S> = (Vec<Trajectory<S>>, bool);

/// Monte Carlo estimates from sampled rollouts.
pub struct MonteCarlo<'a, E, P> {
    env: &'a E,
    policy: &'a P,
    gamma: f64,
    horizon: usize,
}

impl<'a, E, P> MonteCarlo<'a, E, P>
where
    E: Environment,
    P: DifferentiablePolicy<E::State>,
{
    pub fn new(env: &'a E, policy: &'a P, gamma: f64, horizon: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter { name: "gamma", reason: format!("must lie in [0, 1), got {gamma}") });
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter { name: "horizon", reason: "must be at least 1".into() });
        }
        if env.action_count() != policy.action_count() {
            return Err(Error::DimensionMismatch { expected: env.action_count(), actual: policy.action_count() });
        }
        Ok(Self { env, policy, gamma, horizon })
    }

    fn draw(&self, theta: &DVector<f64>, n: u64, root: StreamKey, iteration: u64, purpose: Purpose) -> Result<Vec<Trajectory<E::State>>> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = root.at(iteration, purpose, i).rng();
                sample_trajectory(self.env, self.policy, theta, self.horizon, &mut rng)
            })
            .collect()
    }

    /// Draw under the budget; `None` when nothing fits.
    fn draw_budgeted(
        &self,
        theta: &DVector<f64>,
        n: u64,
        root: StreamKey,
        iteration: u64,
        purpose: Purpose,
        budget: &mut Budget,
    ) -> Result<Option<Drawn<E::State>>> {
        let granted = budget.request(n);
        if granted == 0 {
            return Ok(None);
        }
        let mut trajs = self.draw(theta, granted, root, iteration, purpose)?;
        let accepted = budget.commit(trajs.iter().map(Trajectory::len));
        if accepted == 0 {
            return Ok(None);
        }
        trajs.truncate(accepted);
        Ok(Some((trajs, (accepted as u64) < n)))
    }

    fn mean_cost(&self, trajs: &[Trajectory<E::State>]) -> f64 {
        trajs.iter().map(|t| t.discounted_cost(self.gamma, self.horizon)).sum::<f64>() / trajs.len() as f64
    }
}

fn total_steps<S>(trajs: &[Trajectory<S>]) -> u64 {
    trajs.iter().map(|t| t.len() as u64).sum()
}

impl<E, P> EstimateProvider for MonteCarlo<'_, E, P>
where
    E: Environment,
    P: DifferentiablePolicy<E::State>,
{
    fn dim(&self) -> usize {
        self.policy.param_dim()
    }

    fn gradient(&self, theta: &DVector<f64>, n: u64, root: StreamKey, iteration: u64, budget: &mut Budget) -> Result<Option<Batch<DVector<f64>>>> {
        let Some((trajs, truncated)) = self.draw_budgeted(theta, n, root, iteration, Purpose::Snapshot, budget)? else {
            return Ok(None);
        };
        let est = grad_estimate(self.policy, theta, &trajs, self.gamma, self.horizon)?;
        Ok(Some(Batch {
            value: est.vector,
            samples: trajs.len() as u64,
            steps: total_steps(&trajs),
            objective: Some(self.mean_cost(&trajs)),
            truncated,
        }))
    }

    fn hessian(&self, theta: &DVector<f64>, n: u64, root: StreamKey, iteration: u64, budget: &mut Budget) -> Result<Option<Batch<DMatrix<f64>>>> {
        let Some((trajs, truncated)) = self.draw_budgeted(theta, n, root, iteration, Purpose::Hessian, budget)? else {
            return Ok(None);
        };
        let est = hess_estimate(self.policy, theta, &trajs, self.gamma, self.horizon)?;
        Ok(Some(Batch {
            value: est.matrix,
            samples: trajs.len() as u64,
            steps: total_steps(&trajs),
            objective: Some(self.mean_cost(&trajs)),
            truncated,
        }))
    }

    fn correction(
        &self,
        theta_t: &DVector<f64>,
        h_prev: &DVector<f64>,
        n: u64,
        root: StreamKey,
        iteration: u64,
        budget: &mut Budget,
    ) -> Result<Option<Batch<DVector<f64>>>> {
        let granted = budget.request(n);
        if granted == 0 {
            return Ok(None);
        }
        // each correction has its own stream: first the interpolation weight,
        // then one rollout at the interpolated parameters
        let draws: Vec<(f64, Trajectory<E::State>)> = (0..granted)
            .into_par_iter()
            .map(|i| {
                let mut rng = root.at(iteration, Purpose::Correction, i).rng();
                let alpha: f64 = rng.random();
                let theta = crate::estimators::correction_point(theta_t, h_prev, alpha);
                sample_trajectory(self.env, self.policy, &theta, self.horizon, &mut rng).map(|t| (alpha, t))
            })
            .collect::<Result<_>>()?;
        let accepted = budget.commit(draws.iter().map(|(_, t)| t.len()));
        if accepted == 0 {
            return Ok(None);
        }
        let draws = &draws[..accepted];
        let terms: Vec<DVector<f64>> = draws
            .par_iter()
            .map(|(alpha, t)| hvp_correction_term(self.policy, theta_t, h_prev, *alpha, t, self.gamma, self.horizon))
            .collect::<Result<_>>()?;
        Ok(Some(Batch {
            value: pairwise_sum_vec(&terms, self.dim()) / accepted as f64,
            samples: accepted as u64,
            steps: draws.iter().map(|(_, t)| t.len() as u64).sum(),
            objective: None,
            truncated: (accepted as u64) < n,
        }))
    }

    fn evaluate(&self, theta: &DVector<f64>, n: u64, root: StreamKey) -> Result<Evaluation> {
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let returns: Vec<f64> = self
            .draw(theta, n, root, 0, Purpose::Evaluation)?
            .iter()
            .map(|t| t.discounted_return(self.gamma, self.horizon))
            .collect();
        let count = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / count;
        let var = if returns.len() > 1 {
            returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (count - 1.0)
        } else {
            0.0
        };
        Ok(Evaluation { mean_return: mean, stderr: (var / count).sqrt(), samples: n })
    }
}

/// Exact derivatives of `J_H` on a tabular MDP, injected in place of
/// estimates. Consumes no samples; the correction is the exact gradient
/// difference it would estimate without bias.
pub struct ExactTabular<'a, P> {
    mdp: &'a TabularMdp,
    policy: &'a P,
    gamma: f64,
    horizon: usize,
}

impl<'a, P> ExactTabular<'a, P>
where
    P: DifferentiablePolicy<usize>,
{
    pub fn new(mdp: &'a TabularMdp, policy: &'a P, gamma: f64, horizon: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter { name: "gamma", reason: format!("must lie in [0, 1), got {gamma}") });
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter { name: "horizon", reason: "must be at least 1".into() });
        }
        Ok(Self { mdp, policy, gamma, horizon })
    }

    fn exact<T>(value: T, objective: Option<f64>) -> Option<Batch<T>> {
        Some(Batch { value, samples: 0, steps: 0, objective, truncated: false })
    }
}

impl<P> EstimateProvider for ExactTabular<'_, P>
where
    P: DifferentiablePolicy<usize>,
{
    fn dim(&self) -> usize {
        self.policy.param_dim()
    }

    fn gradient(&self, theta: &DVector<f64>, _n: u64, _root: StreamKey, _iteration: u64, _budget: &mut Budget) -> Result<Option<Batch<DVector<f64>>>> {
        let e = exact_derivatives(self.mdp, self.policy, theta, self.gamma, self.horizon)?;
        Ok(Self::exact(e.gradient, Some(e.value)))
    }

    fn hessian(&self, theta: &DVector<f64>, _n: u64, _root: StreamKey, _iteration: u64, _budget: &mut Budget) -> Result<Option<Batch<DMatrix<f64>>>> {
        let e = exact_derivatives(self.mdp, self.policy, theta, self.gamma, self.horizon)?;
        Ok(Self::exact(e.hessian, Some(e.value)))
    }

    fn correction(
        &self,
        theta_t: &DVector<f64>,
        h_prev: &DVector<f64>,
        _n: u64,
        _root: StreamKey,
        _iteration: u64,
        _budget: &mut Budget,
    ) -> Result<Option<Batch<DVector<f64>>>> {
        let now = exact_derivatives(self.mdp, self.policy, theta_t, self.gamma, self.horizon)?;
        let before = exact_derivatives(self.mdp, self.policy, &(theta_t - h_prev), self.gamma, self.horizon)?;
        Ok(Self::exact(now.gradient - before.gradient, None))
    }

    fn evaluate(&self, theta: &DVector<f64>, _n: u64, _root: StreamKey) -> Result<Evaluation> {
        let e = exact_derivatives(self.mdp, self.policy, theta, self.gamma, self.horizon)?;
        Ok(Evaluation { mean_return: -e.value, stderr: 0.0, samples: 0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_budget_grants_what_fits() {
        let mut b = Budget::new(Some(10), SampleUnit::Trajectories);
        assert_eq!(b.request(7), 7);
        assert_eq!(b.commit([3, 4, 5, 6, 7, 8, 9]), 7);
        assert_eq!(b.request(7), 3);
        assert_eq!(b.commit([1, 1, 1]), 3);
        assert!(b.exhausted());
        assert_eq!(b.request(1), 0);
    }

    #[test]
    fn step_budget_accepts_a_prefix() {
        let mut b = Budget::new(Some(10), SampleUnit::Steps);
        assert_eq!(b.request(5), 5);
        assert_eq!(b.commit([4, 4, 4, 1]), 2);
        assert_eq!(b.used(), 8);
        assert_eq!(b.remaining(), Some(2));
    }

    #[test]
    fn reserve_is_withheld_until_released() {
        let mut b = Budget::new(Some(10), SampleUnit::Trajectories);
        b.set_reserve(4);
        assert_eq!(b.request(9), 6);
        assert_eq!(b.commit([1; 9]), 6);
        assert_eq!(b.request(1), 0);
        b.set_reserve(0);
        assert_eq!(b.request(9), 4);
    }

    #[test]
    fn unlimited_budget_counts() {
        let mut b = Budget::unlimited();
        assert_eq!(b.request(1_000_000), 1_000_000);
        assert_eq!(b.commit([1, 2]), 2);
        assert_eq!(b.remaining(), None);
        assert_eq!(b.used(), 2);
    }
}
