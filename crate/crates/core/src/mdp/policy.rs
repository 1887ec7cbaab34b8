//! Differentiable policies and the log-linear (softmax) family.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::sample_categorical;
use crate::error::{Error, Result};

/// Uniform bounds on the first three derivatives of `log pi(a|s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBounds {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

/// Bounds for a log-linear policy whose features satisfy `|phi| <= c_phi`.
pub fn policy_derivative_bounds(c_phi: f64) -> Result<DerivativeBounds> {
    if !(c_phi > 0.0 && c_phi.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "c_phi",
            reason: format!("must be positive and finite, got {c_phi}"),
        });
    }
    Ok(DerivativeBounds {
        g1: 2.0 * c_phi,
        g2: 4.0 * c_phi * c_phi,
        g3: 8.0 * c_phi * c_phi * c_phi,
    })
}

/// A stochastic policy over a finite action set whose log-probability is
/// three times differentiable in the parameters.
pub trait DifferentiablePolicy<S>: Sync {
    fn param_dim(&self) -> usize;

    fn action_count(&self) -> usize;

    fn action_probs(&self, theta: &DVector<f64>, state: &S) -> Vec<f64>;

    fn log_prob(&self, theta: &DVector<f64>, state: &S, action: usize) -> f64;

    fn grad_log(&self, theta: &DVector<f64>, state: &S, action: usize) -> DVector<f64>;

    fn hess_log(&self, theta: &DVector<f64>, state: &S, action: usize) -> DMatrix<f64>;

    /// `hess_log(theta, s, a) * v` without forming the matrix when possible.
    fn hess_log_apply(&self, theta: &DVector<f64>, state: &S, action: usize, v: &DVector<f64>) -> DVector<f64> {
        self.hess_log(theta, state, action) * v
    }

    /// Directional third derivative `d/dt hess_log(theta + t y)` at `t = 0`.
    fn third_dir_log(&self, theta: &DVector<f64>, state: &S, action: usize, y: &DVector<f64>) -> DMatrix<f64>;

    /// `(grad_log, hess_log)` in one pass.
    fn score_terms(&self, theta: &DVector<f64>, state: &S, action: usize) -> (DVector<f64>, DMatrix<f64>) {
        (self.grad_log(theta, state, action), self.hess_log(theta, state, action))
    }

    fn derivative_bounds(&self) -> DerivativeBounds;

    fn sample_action<R: Rng + ?Sized>(&self, theta: &DVector<f64>, state: &S, rng: &mut R) -> usize
    where
        Self: Sized,
    {
        sample_categorical(&self.action_probs(theta, state), rng)
    }
}

/// Feature map `phi(s, a)` with a known norm bound.
pub trait FeatureMap<S>: Sync {
    fn dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn features(&self, state: &S, action: usize) -> DVector<f64>;
    /// `C_phi` such that `|phi(s, a)| <= C_phi` everywhere.
    fn norm_bound(&self) -> f64;
}

/// One-hot `(s, a)` indicator features scaled by `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularFeatures {
    states: usize,
    actions: usize,
    scale: f64,
}

impl TabularFeatures {
    pub fn new(states: usize, actions: usize, scale: f64) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::InvalidParameter {
                name: "features",
                reason: "need at least one state and action".into(),
            });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "scale",
                reason: format!("must be positive, got {scale}"),
            });
        }
        Ok(Self { states, actions, scale })
    }
}

impl FeatureMap<usize> for TabularFeatures {
    fn dim(&self) -> usize {
        self.states * self.actions
    }

    fn action_count(&self) -> usize {
        self.actions
    }

    fn features(&self, state: &usize, action: usize) -> DVector<f64> {
        let mut phi = DVector::zeros(self.dim());
        phi[state * self.actions + action] = self.scale;
        phi
    }

    fn norm_bound(&self) -> f64 {
        self.scale
    }
}

/// Softmax over linear scores: `pi(a|s) ∝ exp(theta · phi(s, a))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearPolicy<F> {
    features: F,
}

/// Softmax probabilities and centered features `phi(s, a) - phi_bar(s)` for
/// every action.
struct Centered {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    centered: Vec<DVector<f64>>,
}

impl<F> LogLinearPolicy<F> {
    pub fn new(features: F) -> Self {
        Self { features }
    }

    pub fn features(&self) -> &F {
        &self.features
    }

    fn centered<S>(&self, theta: &DVector<f64>, state: &S) -> Centered
    where
        F: FeatureMap<S>,
    {
        let n = self.features.action_count();
        let phis: Vec<DVector<f64>> = (0..n).map(|a| self.features.features(state, a)).collect();
        let logits: Vec<f64> = phis.iter().map(|p| p.dot(theta)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|l| l - log_z).collect();
        let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
        let mut mean = DVector::zeros(self.features.dim());
        for (p, phi) in probs.iter().zip(&phis) {
            mean.axpy(*p, phi, 1.0);
        }
        let centered = phis.into_iter().map(|phi| phi - &mean).collect();
        Centered { probs, log_probs, centered }
    }
}

fn neg_covariance(c: &Centered, dim: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(dim, dim);
    for (p, v) in c.probs.iter().zip(&c.centered) {
        h.ger(-p, v, v, 1.0);
    }
    h
}

impl<S, F: FeatureMap<S>> DifferentiablePolicy<S> for LogLinearPolicy<F> {
    fn param_dim(&self) -> usize {
        self.features.dim()
    }

    fn action_count(&self) -> usize {
        self.features.action_count()
    }

    fn action_probs(&self, theta: &DVector<f64>, state: &S) -> Vec<f64> {
        self.centered(theta, state).probs
    }

    fn log_prob(&self, theta: &DVector<f64>, state: &S, action: usize) -> f64 {
        self.centered(theta, state).log_probs[action]
    }

    fn grad_log(&self, theta: &DVector<f64>, state: &S, action: usize) -> DVector<f64> {
        self.centered(theta, state).centered.swap_remove(action)
    }

    fn hess_log(&self, theta: &DVector<f64>, state: &S, _action: usize) -> DMatrix<f64> {
        neg_covariance(&self.centered(theta, state), self.features.dim())
    }

    fn hess_log_apply(&self, theta: &DVector<f64>, state: &S, _action: usize, v: &DVector<f64>) -> DVector<f64> {
        let c = self.centered(theta, state);
        let mut out = DVector::zeros(self.features.dim());
        for (p, u) in c.probs.iter().zip(&c.centered) {
            out.axpy(-p * u.dot(v), u, 1.0);
        }
        out
    }

    // Third cumulant of phi under pi(.|s). Differentiating phi_bar through pi
    // contributes nothing extra because the centered third moment already is
    // the derivative of the covariance.
    fn third_dir_log(&self, theta: &DVector<f64>, state: &S, _action: usize, y: &DVector<f64>) -> DMatrix<f64> {
        let c = self.centered(theta, state);
        let d = self.features.dim();
        let mut t = DMatrix::zeros(d, d);
        for (p, u) in c.probs.iter().zip(&c.centered) {
            t.ger(-p * u.dot(y), u, u, 1.0);
        }
        t
    }

    fn score_terms(&self, theta: &DVector<f64>, state: &S, action: usize) -> (DVector<f64>, DMatrix<f64>) {
        let c = self.centered(theta, state);
        let h = neg_covariance(&c, self.features.dim());
        (c.centered[action].clone(), h)
    }

    fn derivative_bounds(&self) -> DerivativeBounds {
        policy_derivative_bounds(self.features.norm_bound()).expect("feature maps report a positive bound")
    }
}
