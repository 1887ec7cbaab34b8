//! Exact ground truth on tabular MDPs.
//!
//! Two independent routes are provided:
//!
//! * [`enumerate`] lists every length-`H` trajectory with its exact
//!   probability, and [`exact_j_h`], [`exact_grad_j_h`], [`exact_hess_j_h`]
//!   take expectations using the whole-trajectory likelihood ratio
//!   `grad log Pr(tau) = grad X(H-1)`. Arbitrary per-trajectory statistics
//!   (for example an estimator's single-sample term) can be averaged exactly
//!   with [`EnumeratedDistribution::expect_vec`] and friends.
//! * [`exact_derivatives`] propagates the state distribution and its first and
//!   second parameter derivatives forward in time. It scales linearly in `H`
//!   and is used where enumeration is out of reach.
//!
//! All objectives follow the minimization convention: `J_H` is the expected
//! discounted *cost* `-sum_k gamma^k r_k`.
//!
//! Finite-difference helpers close the loop by differentiating the exact
//! quantities numerically.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{check_finite_mat, check_finite_vec, pairwise_sum_mat, pairwise_sum_vec, symmetrize};
use crate::mdp::{DifferentiablePolicy, Environment, TabularMdp, Trajectory};

/// Largest number of trajectories [`enumerate`] will produce.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnumerateOptions {
    /// Drop branches whose probability falls below this value. Off by default.
    pub prune_below: Option<f64>,
}

/// Every trajectory of length `horizon` with positive probability, paired
/// with that probability.
#[derive(Debug, Clone)]
pub struct EnumeratedDistribution {
    pub entries: Vec<(Trajectory<usize>, f64)>,
    pub horizon: usize,
}

impl EnumeratedDistribution {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn expect_scalar<F>(&self, f: F) -> f64
    where
        F: Fn(&Trajectory<usize>) -> f64 + Sync,
    {
        let terms: Vec<DVector<f64>> = self
            .entries
            .par_iter()
            .map(|(t, p)| DVector::from_element(1, p * f(t)))
            .collect();
        pairwise_sum_vec(&terms, 1)[0]
    }

    pub fn expect_vec<F>(&self, dim: usize, f: F) -> DVector<f64>
    where
        F: Fn(&Trajectory<usize>) -> DVector<f64> + Sync,
    {
        let terms: Vec<DVector<f64>> = self.entries.par_iter().map(|(t, p)| f(t) * *p).collect();
        pairwise_sum_vec(&terms, dim)
    }

    pub fn expect_mat<F>(&self, dim: usize, f: F) -> DMatrix<f64>
    where
        F: Fn(&Trajectory<usize>) -> DMatrix<f64> + Sync,
    {
        let terms: Vec<DMatrix<f64>> = self.entries.par_iter().map(|(t, p)| f(t) * *p).collect();
        pairwise_sum_mat(&terms, dim, dim)
    }
}

pub fn enumerate<P>(mdp: &TabularMdp, policy: &P, theta: &DVector<f64>, horizon: usize) -> Result<EnumeratedDistribution>
where
    P: DifferentiablePolicy<usize> + ?Sized,
{
    enumerate_with(mdp, policy, theta, horizon, EnumerateOptions::default())
}

/// Depth-first enumeration of `(s_0, a_0, ..., s_{H-1}, a_{H-1}, s_H)`.
pub fn enumerate_with<P>(
    mdp: &TabularMdp,
    policy: &P,
    theta: &DVector<f64>,
    horizon: usize,
    options: EnumerateOptions,
) -> Result<EnumeratedDistribution>
where
    P: DifferentiablePolicy<usize> + ?Sized,
{
    if horizon == 0 {
        return Err(Error::InvalidParameter { name: "horizon", reason: "must be at least 1".into() });
    }
    check_policy(mdp, policy, theta)?;
    let (ns, na) = (mdp.state_count() as u128, mdp.action_count() as u128);
    let worst = ns
        .checked_pow(horizon as u32 + 1)
        .and_then(|v| v.checked_mul(na.checked_pow(horizon as u32)?))
        .unwrap_or(u128::MAX);
    if worst > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge(worst, ENUMERATION_LIMIT));
    }

    let probs: Vec<Vec<f64>> = (0..mdp.state_count()).map(|s| policy.action_probs(theta, &s)).collect();
    let mut out = Vec::new();
    let mut prefix = Trajectory { states: Vec::new(), actions: Vec::new(), rewards: Vec::new(), horizon, terminated: false };
    let cutoff = options.prune_below.unwrap_or(0.0);
    for (s0, &p0) in mdp.initial_dist().iter().enumerate() {
        if p0 > cutoff {
            prefix.states.push(s0);
            descend(mdp, &probs, horizon, cutoff, p0, &mut prefix, &mut out);
            prefix.states.pop();
        }
    }
    Ok(EnumeratedDistribution { entries: out, horizon })
}

fn descend(
    mdp: &TabularMdp,
    probs: &[Vec<f64>],
    horizon: usize,
    cutoff: f64,
    prob: f64,
    prefix: &mut Trajectory<usize>,
    out: &mut Vec<(Trajectory<usize>, f64)>,
) {
    if prefix.actions.len() == horizon {
        out.push((prefix.clone(), prob));
        return;
    }
    let s = *prefix.states.last().expect("prefix always holds the current state");
    for (a, &pa) in probs[s].iter().enumerate() {
        if pa * prob <= cutoff {
            continue;
        }
        prefix.actions.push(a);
        prefix.rewards.push(mdp.reward(s, a));
        for (next, &pt) in mdp.transition_row(s, a).iter().enumerate() {
            let p = prob * (pa * pt);
            if p > cutoff {
                prefix.states.push(next);
                descend(mdp, probs, horizon, cutoff, p, prefix, out);
                prefix.states.pop();
            }
        }
        prefix.actions.pop();
        prefix.rewards.pop();
    }
}

fn check_policy<P>(mdp: &TabularMdp, policy: &P, theta: &DVector<f64>) -> Result<()>
where
    P: DifferentiablePolicy<usize> + ?Sized,
{
    if policy.action_count() != mdp.action_count() {
        return Err(Error::DimensionMismatch { expected: mdp.action_count(), actual: policy.action_count() });
    }
    if theta.len() != policy.param_dim() {
        return Err(Error::DimensionMismatch { expected: policy.param_dim(), actual: theta.len() });
    }
    check_finite_vec(theta, "theta")
}

/// `J_H = E[sum_{k<H} gamma^k c_k]`.
pub fn exact_j_h(dist: &EnumeratedDistribution, gamma: f64, horizon: usize) -> f64 {
    dist.expect_scalar(|t| t.discounted_cost(gamma, horizon))
}

/// `grad J_H = E[C(tau) grad X(H-1)]` with `C` the discounted cost.
pub fn exact_grad_j_h<P>(dist: &EnumeratedDistribution, policy: &P, theta: &DVector<f64>, gamma: f64, horizon: usize) -> DVector<f64>
where
    P: DifferentiablePolicy<usize> + ?Sized,
{
    let d = policy.param_dim();
    dist.expect_vec(d, |t| {
        let (g, _) = trajectory_score(policy, theta, t, false);
        g * t.discounted_cost(gamma, horizon)
    })
}

/// `hess J_H = E[C(tau) (hess X(H-1) + grad X(H-1) grad X(H-1)^T)]`.
pub fn exact_hess_j_h<P>(dist: &EnumeratedDistribution, policy: &P, theta: &DVector<f64>, gamma: f64, horizon: usize) -> DMatrix<f64>
where
    P: DifferentiablePolicy<usize> + ?Sized,
{
    let d = policy.param_dim();
    let m = dist.expect_mat(d, |t| {
        let (g, h) = trajectory_score(policy, theta, t, true);
        let mut m = h;
        m.ger(1.0, &g, &g, 1.0);
        m * t.discounted_cost(gamma, horizon)
    });
    symmetrize(&m)
}

fn trajectory_score<P>(policy: &P, theta: &DVector<f64>, t: &Trajectory<usize>, second: bool) -> (DVector<f64>, DMatrix<f64>)
where
    P: DifferentiablePolicy<usize> + ?Sized,
{
    let d = policy.param_dim();
    let mut g = DVector::zeros(d);
    let mut h = DMatrix::zeros(if second { d } else { 0 }, if second { d } else { 0 });
    for (s, &a) in t.states.iter().zip(&t.actions) {
        g += policy.grad_log(theta, s, a);
        if second {
            h += policy.hess_log(theta, s, a);
        }
    }
    (g, h)
}

/// `J_H`, `grad J_H` and `hess J_H` computed exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDerivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Exact `J_H` and its first two derivatives by forward propagation of the
/// state distribution `mu_k` together with `grad mu_k` and `hess mu_k`.
///
/// Costs `O(H |S|^2 |A| d^2)`, so long horizons are cheap.
pub fn exact_derivatives<P>(mdp: &TabularMdp, policy: &P, theta: &DVector<f64>, gamma: f64, horizon: usize) -> Result<ExactDerivatives>
where
    P: DifferentiablePolicy<usize> + ?Sized,
{
    check_policy(mdp, policy, theta)?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter { name: "gamma", reason: format!("must lie in [0, 1), got {gamma}") });
    }
    let (ns, na, d) = (mdp.state_count(), mdp.action_count(), policy.param_dim());

    // per-state policy quantities are fixed in time
    let mut pi = vec![vec![0.0; na]; ns];
    let mut score = vec![Vec::with_capacity(na); ns];
    let mut curv = vec![Vec::with_capacity(na); ns];
    for s in 0..ns {
        pi[s] = policy.action_probs(theta, &s);
        for a in 0..na {
            let (g, h) = policy.score_terms(theta, &s, a);
            score[s].push(g);
            curv[s].push(h);
        }
    }

    let mut mu: Vec<f64> = mdp.initial_dist().to_vec();
    let mut dmu: Vec<DVector<f64>> = vec![DVector::zeros(d); ns];
    let mut d2mu: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, d); ns];
    let mut value = 0.0;
    let mut gradient = DVector::zeros(d);
    let mut hessian = DMatrix::zeros(d, d);
    let mut discount = 1.0;

    for _ in 0..horizon {
        let mut next_mu = vec![0.0; ns];
        let mut next_dmu = vec![DVector::zeros(d); ns];
        let mut next_d2mu = vec![DMatrix::zeros(d, d); ns];
        for s in 0..ns {
            for a in 0..na {
                let p = pi[s][a];
                if p == 0.0 {
                    continue;
                }
                // q = mu(s) pi(a|s) and its derivatives
                let g = &score[s][a];
                let q = mu[s] * p;
                let dq = (&dmu[s] + g * mu[s]) * p;
                let mut d2q = &d2mu[s] * p + &curv[s][a] * q;
                d2q.ger(p, &dmu[s], g, 1.0);
                d2q.ger(p, g, &dmu[s], 1.0);
                d2q.ger(q, g, g, 1.0);

                let w = -discount * mdp.reward(s, a);
                value += w * q;
                gradient.axpy(w, &dq, 1.0);
                hessian += &d2q * w;

                for (next, &pt) in mdp.transition_row(s, a).iter().enumerate() {
                    if pt != 0.0 {
                        next_mu[next] += pt * q;
                        next_dmu[next].axpy(pt, &dq, 1.0);
                        next_d2mu[next] += &d2q * pt;
                    }
                }
            }
        }
        mu = next_mu;
        dmu = next_dmu;
        d2mu = next_d2mu;
        discount *= gamma;
    }
    Ok(ExactDerivatives { value, gradient, hessian: symmetrize(&hessian) })
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, theta: &DVector<f64>, step: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    check_step(step)?;
    let mut out = DVector::zeros(theta.len());
    let mut x = theta.clone();
    for i in 0..theta.len() {
        x[i] = theta[i] + step;
        let up = f(&x);
        x[i] = theta[i] - step;
        let down = f(&x);
        x[i] = theta[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite("finite-difference evaluation"));
        }
        out[i] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

/// Central-difference Jacobian of a gradient map, symmetrized.
pub fn fd_hessian<F>(grad: F, theta: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    check_step(step)?;
    let d = theta.len();
    let mut out = DMatrix::zeros(d, d);
    let mut x = theta.clone();
    for i in 0..d {
        x[i] = theta[i] + step;
        let up = grad(&x);
        x[i] = theta[i] - step;
        let down = grad(&x);
        x[i] = theta[i];
        if up.len() != d || down.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: up.len() });
        }
        check_finite_vec(&up, "finite-difference evaluation")?;
        check_finite_vec(&down, "finite-difference evaluation")?;
        out.set_column(i, &((up - down) / (2.0 * step)));
    }
    Ok(symmetrize(&out))
}

/// Central difference of a matrix-valued map along direction `y`.
pub fn fd_directional<F>(f: F, theta: &DVector<f64>, y: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    check_step(step)?;
    if y.len() != theta.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), actual: y.len() });
    }
    let up = f(&(theta + y * step));
    let down = f(&(theta - y * step));
    check_finite_mat(&up, "finite-difference evaluation")?;
    check_finite_mat(&down, "finite-difference evaluation")?;
    Ok((up - down) / (2.0 * step))
}

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "step", reason: format!("must be positive, got {step}") })
    }
}
