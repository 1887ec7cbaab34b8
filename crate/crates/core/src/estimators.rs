//! Gradient and Hessian estimators for the truncated objective
//! `J_H(theta) = E[sum_{k<H} gamma^k c_k]`, the Hessian-vector-product
//! correction used by the variance-reduced gradient recursion, the smoothness
//! constants, and the truncation horizon.
//!
//! Notation: `X(k) = sum_{j<=k} log pi(a_j|s_j)` along a trajectory, so
//! `grad X(k)` and `hess X(k)` are cumulative sums of per-step policy
//! derivatives. Sums over steps stop at the end of the trajectory or at `H`,
//! whichever comes first, which is the same as padding a terminated rollout
//! with zero-cost absorbing steps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{check_finite_vec, pairwise_sum_mat, pairwise_sum_vec, symmetrize};
use crate::mdp::{DerivativeBounds, DifferentiablePolicy, Trajectory};

/// Lipschitz-type constants of the objective and its estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessConstants {
    /// Bound on `|J|`.
    pub l0: f64,
    /// Bound on `|grad J|` and on every gradient estimate.
    pub l1: f64,
    /// Bound on `|hess J|` and on every Hessian estimate.
    pub l2: f64,
    /// Lipschitz constant of the Hessian.
    pub l3: f64,
    pub r_max: f64,
    pub gamma: f64,
    pub bounds: DerivativeBounds,
}

impl SmoothnessConstants {
    pub fn new(r_max: f64, gamma: f64, bounds: DerivativeBounds) -> Result<Self> {
        check_discount(gamma)?;
        for (name, v) in [("r_max", r_max), ("g1", bounds.g1), ("g2", bounds.g2), ("g3", bounds.g3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        let DerivativeBounds { g1, g2, g3 } = bounds;
        let q = 1.0 - gamma;
        let (q2, q3) = (q * q, q * q * q);
        Ok(Self {
            l0: r_max / q,
            l1: g1 * r_max / q2,
            l2: g2 * r_max / q2 + 2.0 * g1 * g1 * r_max / q3,
            l3: g3 * r_max / q2 + (6.0 * g2 * g1 + 2.0 * g1 * g1 * g1) * r_max / q3,
            r_max,
            gamma,
            bounds,
        })
    }
}

fn check_discount(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("must lie in [0, 1), got {gamma}"),
        });
    }
    Ok(())
}

/// Truncation horizon that keeps the truncation bias of the gradient below
/// `eps / 2` and of the Hessian below `sqrt(l3 * eps) / 2`.
///
/// Evaluates the three closed-form sufficient conditions and returns the
/// ceiling of their maximum (at least 1).
pub fn truncation_horizon(gamma: f64, eps: f64, g1: f64, g2: f64, r_max: f64, l3: f64) -> Result<usize> {
    check_discount(gamma)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must be positive, got {eps}"),
        });
    }
    if gamma == 0.0 {
        return Ok(1);
    }
    let c1 = 1.0 / (1.0 / gamma).ln();
    let c2 = 1.0 / (1.0 - gamma);
    let root = l3.sqrt() * eps.sqrt();
    let grad_bias = 2.0 * c1 * (4.0 * c1 * c2 * g1 * r_max / eps).ln() + c2;
    let hess_first = 2.0 * c1 * (8.0 * c1 * c2 * g2 * r_max / root).ln() + c2;
    let hess_second = 2.0 * c1 * (64.0 * c1 * c1 * c2 * g1 * g1 * r_max / root).ln() + 6.0 * c2;
    let h = grad_bias.max(hess_first).max(hess_second).ceil();
    if !h.is_finite() {
        return Err(Error::NonFinite("truncation horizon"));
    }
    Ok(h.max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub vector: DVector<f64>,
    pub sample_count: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessEstimate {
    pub matrix: DMatrix<f64>,
    pub sample_count: usize,
    pub horizon: usize,
}

fn steps<S>(traj: &Trajectory<S>, horizon: usize) -> usize {
    traj.len().min(horizon)
}

/// `grad X(t)` for one trajectory.
pub fn x_grad<S, P>(policy: &P, theta: &DVector<f64>, traj: &Trajectory<S>, t: usize) -> Result<DVector<f64>>
where
    P: DifferentiablePolicy<S> + ?Sized,
{
    if t >= traj.len() {
        return Err(Error::StepOutOfRange { index: t, len: traj.len() });
    }
    let mut acc = DVector::zeros(policy.param_dim());
    for k in 0..=t {
        acc += policy.grad_log(theta, &traj.states[k], traj.actions[k]);
    }
    Ok(acc)
}

/// `hess X(t)` for one trajectory.
pub fn x_hess<S, P>(policy: &P, theta: &DVector<f64>, traj: &Trajectory<S>, t: usize) -> Result<DMatrix<f64>>
where
    P: DifferentiablePolicy<S> + ?Sized,
{
    if t >= traj.len() {
        return Err(Error::StepOutOfRange { index: t, len: traj.len() });
    }
    let d = policy.param_dim();
    let mut acc = DMatrix::zeros(d, d);
    for k in 0..=t {
        acc += policy.hess_log(theta, &traj.states[k], traj.actions[k]);
    }
    Ok(acc)
}

/// Single-trajectory gradient term `sum_k gamma^k c_k grad X(k)`.
pub fn trajectory_gradient<S, P>(policy: &P, theta: &DVector<f64>, traj: &Trajectory<S>, gamma: f64, horizon: usize) -> DVector<f64>
where
    P: DifferentiablePolicy<S> + ?Sized,
{
    let d = policy.param_dim();
    let mut grad_x = DVector::zeros(d);
    let mut out = DVector::zeros(d);
    let mut discount = 1.0;
    for k in 0..steps(traj, horizon) {
        grad_x += policy.grad_log(theta, &traj.states[k], traj.actions[k]);
        out.axpy(discount * traj.cost(k), &grad_x, 1.0);
        discount *= gamma;
    }
    out
}

/// Single-trajectory Hessian term
/// `sum_k gamma^k c_k (hess X(k) + grad X(k) grad X(k)^T)`.
pub fn trajectory_hessian<S, P>(policy: &P, theta: &DVector<f64>, traj: &Trajectory<S>, gamma: f64, horizon: usize) -> DMatrix<f64>
where
    P: DifferentiablePolicy<S> + ?Sized,
{
    let d = policy.param_dim();
    let mut grad_x = DVector::zeros(d);
    let mut hess_x = DMatrix::zeros(d, d);
    let mut out = DMatrix::zeros(d, d);
    let mut discount = 1.0;
    for k in 0..steps(traj, horizon) {
        let (g, h) = policy.score_terms(theta, &traj.states[k], traj.actions[k]);
        grad_x += g;
        hess_x += h;
        let w = discount * traj.cost(k);
        if w != 0.0 {
            out += &hess_x * w;
            out.ger(w, &grad_x, &grad_x, 1.0);
        }
        discount *= gamma;
    }
    out
}

/// Single-trajectory term of the legacy Hessian form
/// `sum_k gamma^k c_k (hess X(k) + grad X(k) grad X(L-1)^T)`, symmetrized,
/// where `L` is the number of realized steps within the horizon.
pub fn trajectory_legacy_hessian<S, P>(policy: &P, theta: &DVector<f64>, traj: &Trajectory<S>, gamma: f64, horizon: usize) -> DMatrix<f64>
where
    P: DifferentiablePolicy<S> + ?Sized,
{
    let d = policy.param_dim();
    let mut grad_x = DVector::zeros(d);
    let mut hess_x = DMatrix::zeros(d, d);
    let mut curvature = DMatrix::zeros(d, d);
    let mut weighted_grad = DVector::zeros(d);
    let mut discount = 1.0;
    for k in 0..steps(traj, horizon) {
        let (g, h) = policy.score_terms(theta, &traj.states[k], traj.actions[k]);
        grad_x += g;
        hess_x += h;
        let w = discount * traj.cost(k);
        curvature += &hess_x * w;
        weighted_grad.axpy(w, &grad_x, 1.0);
        discount *= gamma;
    }
    // grad_x now holds grad X(L-1)
    curvature.ger(1.0, &weighted_grad, &grad_x, 1.0);
    symmetrize(&curvature)
}

/// Single-trajectory Hessian term applied to `v`, in O(d) memory.
pub fn trajectory_hvp<S, P>(policy: &P, theta: &DVector<f64>, traj: &Trajectory<S>, gamma: f64, horizon: usize, v: &DVector<f64>) -> DVector<f64>
where
    P: DifferentiablePolicy<S> + ?Sized,
{
    let d = policy.param_dim();
    let mut grad_x = DVector::zeros(d);
    let mut hess_x_v = DVector::zeros(d);
    let mut out = DVector::zeros(d);
    let mut discount = 1.0;
    for k in 0..steps(traj, horizon) {
        let (s, a) = (&traj.states[k], traj.actions[k]);
        grad_x += policy.grad_log(theta, s, a);
        hess_x_v += policy.hess_log_apply(theta, s, a, v);
        let w = discount * traj.cost(k);
        out.axpy(w, &hess_x_v, 1.0);
        out.axpy(w * grad_x.dot(v), &grad_x, 1.0);
        discount *= gamma;
    }
    out
}

fn check_batch<S>(policy_dim: usize, theta: &DVector<f64>, trajectories: &[Trajectory<S>]) -> Result<()> {
    if trajectories.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if theta.len() != policy_dim {
        return Err(Error::DimensionMismatch { expected: policy_dim, actual: theta.len() });
    }
    check_finite_vec(theta, "theta")
}

/// Batch gradient estimate, unbiased for `grad J_H(theta)` when every
/// trajectory was sampled at `theta`.
pub fn grad_estimate<S, P>(policy: &P, theta: &DVector<f64>, trajectories: &[Trajectory<S>], gamma: f64, horizon: usize) -> Result<GradEstimate>
where
    S: Sync,
    P: DifferentiablePolicy<S> + ?Sized,
{
    check_batch(policy.param_dim(), theta, trajectories)?;
    let terms: Vec<DVector<f64>> = trajectories
        .par_iter()
        .map(|t| trajectory_gradient(policy, theta, t, gamma, horizon))
        .collect();
    let n = trajectories.len();
    Ok(GradEstimate {
        vector: pairwise_sum_vec(&terms, policy.param_dim()) / n as f64,
        sample_count: n,
        horizon,
    })
}

/// Batch Hessian estimate, unbiased for `hess J_H(theta)`. Its spectral
/// norm is bounded by `l2` for every horizon.
pub fn hess_estimate<S, P>(policy: &P, theta: &DVector<f64>, trajectories: &[Trajectory<S>], gamma: f64, horizon: usize) -> Result<HessEstimate>
where
    S: Sync,
    P: DifferentiablePolicy<S> + ?Sized,
{
    check_batch(policy.param_dim(), theta, trajectories)?;
    let d = policy.param_dim();
    let terms: Vec<DMatrix<f64>> = trajectories
        .par_iter()
        .map(|t| trajectory_hessian(policy, theta, t, gamma, horizon))
        .collect();
    let n = trajectories.len();
    Ok(HessEstimate {
        matrix: symmetrize(&pairwise_sum_mat(&terms, d, d)) / n as f64,
        sample_count: n,
        horizon,
    })
}

/// Legacy Hessian estimate built on `grad X(H-1)`. Same expectation as
/// [`hess_estimate`], but its norm grows with the horizon.
pub fn legacy_hess_estimate<S, P>(policy: &P, theta: &DVector<f64>, trajectories: &[Trajectory<S>], gamma: f64, horizon: usize) -> Result<HessEstimate>
where
    S: Sync,
    P: DifferentiablePolicy<S> + ?Sized,
{
    check_batch(policy.param_dim(), theta, trajectories)?;
    let d = policy.param_dim();
    let terms: Vec<DMatrix<f64>> = trajectories
        .par_iter()
        .map(|t| trajectory_legacy_hessian(policy, theta, t, gamma, horizon))
        .collect();
    let n = trajectories.len();
    Ok(HessEstimate {
        matrix: pairwise_sum_mat(&terms, d, d) / n as f64,
        sample_count: n,
        horizon,
    })
}

/// The interpolation point `theta_t - alpha * h_prev` at which a correction
/// trajectory must be sampled.
pub fn correction_point(theta_t: &DVector<f64>, h_prev: &DVector<f64>, alpha: f64) -> DVector<f64> {
    theta_t - h_prev * alpha
}

/// One correction sample `H(theta' | {tau}) h_prev` with
/// `theta' = theta_t - alpha h_prev`.
///
/// `trajectory` must have been drawn under `theta'`. Averaged over
/// `alpha ~ U[0, 1]` and trajectories this is unbiased for
/// `grad J_H(theta_t) - grad J_H(theta_t - h_prev)`.
pub fn hvp_correction_term<S, P>(
    policy: &P,
    theta_t: &DVector<f64>,
    h_prev: &DVector<f64>,
    alpha: f64,
    trajectory: &Trajectory<S>,
    gamma: f64,
    horizon: usize,
) -> Result<DVector<f64>>
where
    P: DifferentiablePolicy<S> + ?Sized,
{
    let d = policy.param_dim();
    for v in [theta_t, h_prev] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: v.len() });
        }
    }
    check_finite_vec(theta_t, "theta_t")?;
    check_finite_vec(h_prev, "h_prev")?;
    if !alpha.is_finite() {
        return Err(Error::NonFinite("alpha"));
    }
    let theta = correction_point(theta_t, h_prev, alpha);
    Ok(trajectory_hvp(policy, &theta, trajectory, gamma, horizon, h_prev))
}
