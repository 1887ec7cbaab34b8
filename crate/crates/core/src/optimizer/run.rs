//! The optimizer loop shared by VR-CR-PN and the CR-PN baseline.

use std::time::Instant;

use nalgebra::DVector;

use super::config::{AlgoConfig, SampleUnit};
use super::provider::{Budget, EstimateProvider};
use crate::cubic::{solve_cubic, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::check_finite_vec;
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Snapshot gradients every `S` iterations, Hessian-vector-product
    /// corrections in between.
    VrCrPn,
    /// A fresh `b_g`-trajectory gradient every iteration.
    CrPn,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::VrCrPn => "vr-cr-pn",
            Algorithm::CrPn => "cr-pn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `|h_t| <= sqrt(eps / (4 L3))`.
    StepNorm,
    IterationCap,
    SampleCap,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::StepNorm => "step_norm",
            Termination::IterationCap => "iteration_cap",
            Termination::SampleCap => "sample_cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub snapshot: bool,
    pub step_norm: f64,
    /// Cubic model value at the step, `m_t(h_t)`.
    pub model_value: f64,
    /// Estimated `J_H(theta_t)` in the cost convention, from the
    /// trajectories drawn at `theta_t`.
    pub est_objective: f64,
    pub grad_norm: f64,
    /// Gradient trajectories drawn this iteration (snapshots only).
    pub grad_samples: u64,
    /// Hessian trajectories this iteration, including correction draws.
    pub hess_samples: u64,
    /// Correction draws `b'_t` planned this iteration.
    pub correction_batch: u64,
    pub cum_grad_samples: u64,
    pub cum_hess_samples: u64,
    pub elapsed_ms: f64,
}

impl IterationRecord {
    pub fn cum_total_samples(&self) -> u64 {
        self.cum_grad_samples + self.cum_hess_samples
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    pub theta: DVector<f64>,
    /// Environment steps drawn over the run.
    pub steps: u64,
    /// Trajectories drawn over the run, including any batch of an iteration
    /// that stopped before its step.
    pub samples: u64,
}

impl RunRecord {
    pub fn total_samples(&self) -> u64 {
        self.samples
    }
}

pub fn vr_cr_pn<P: EstimateProvider + ?Sized>(provider: &P, theta0: &DVector<f64>, config: &AlgoConfig) -> Result<RunRecord> {
    run(Algorithm::VrCrPn, provider, theta0, config)
}

pub fn cr_pn<P: EstimateProvider + ?Sized>(provider: &P, theta0: &DVector<f64>, config: &AlgoConfig) -> Result<RunRecord> {
    run(Algorithm::CrPn, provider, theta0, config)
}

/// Run `algorithm` from `theta0` until the step-norm rule fires, `T`
/// iterations elapse, or the sample cap is reached.
///
/// Gradient and correction draws leave room for the iteration's Hessian batch.
/// A batch cut short by the cap is still used, and the run stops after that
/// iteration; a batch that receives no samples stops the run before the step.
pub fn run<P: EstimateProvider + ?Sized>(algorithm: Algorithm, provider: &P, theta0: &DVector<f64>, config: &AlgoConfig) -> Result<RunRecord> {
    config.validate()?;
    let d = provider.dim();
    if theta0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: theta0.len() });
    }
    check_finite_vec(theta0, "theta0")?;

    let started = Instant::now();
    let root = StreamKey::root(config.seed);
    let threshold = config.step_threshold();
    let mut budget = Budget::new(config.sample_cap, config.sample_unit);
    let hessian_reserve = match config.sample_unit {
        SampleUnit::Trajectories => config.hessian_batch,
        SampleUnit::Steps => config.hessian_batch.saturating_mul(config.horizon as u64),
    };
    let mut theta = theta0.clone();
    let mut g = DVector::zeros(d);
    let mut h_prev = DVector::zeros(d);
    let mut records = Vec::new();
    let (mut cum_grad, mut cum_hess, mut steps, mut samples) = (0u64, 0u64, 0u64, 0u64);
    let mut termination = Termination::IterationCap;

    for t in 0..config.max_iterations {
        let snapshot = algorithm == Algorithm::CrPn || t % config.inner_loop == 0;
        let mut truncated = false;
        let (mut grad_samples, mut hess_samples, mut correction_batch) = (0u64, 0u64, 0u64);
        let mut objective = Vec::new();

        budget.set_reserve(hessian_reserve);
        if snapshot {
            let Some(b) = provider.gradient(&theta, config.snapshot_batch, root, t, &mut budget)? else {
                termination = Termination::SampleCap;
                break;
            };
            g = b.value;
            grad_samples = b.samples;
            samples += b.samples;
            steps += b.steps;
            truncated |= b.truncated;
            objective.extend(b.objective.map(|j| (j, b.samples.max(1))));
        } else {
            let norm_sq: f64 = h_prev.norm_squared();
            correction_batch = (config.correction_scale as f64 * norm_sq).ceil() as u64;
            if correction_batch > 0 {
                let Some(b) = provider.correction(&theta, &h_prev, correction_batch, root, t, &mut budget)? else {
                    termination = Termination::SampleCap;
                    break;
                };
                g += b.value;
                hess_samples += b.samples;
                samples += b.samples;
                steps += b.steps;
                truncated |= b.truncated;
            }
        }

        budget.set_reserve(0);
        let Some(hb) = provider.hessian(&theta, config.hessian_batch, root, t, &mut budget)? else {
            termination = Termination::SampleCap;
            break;
        };
        hess_samples += hb.samples;
        samples += hb.samples;
        steps += hb.steps;
        truncated |= hb.truncated;
        objective.extend(hb.objective.map(|j| (j, hb.samples.max(1))));

        let sol = solve_cubic(&g, &hb.value, config.m, DEFAULT_TOL)?;
        let step_norm = sol.h.norm();
        cum_grad += grad_samples;
        cum_hess += hess_samples;
        let weight: u64 = objective.iter().map(|(_, w)| w).sum();
        let est_objective = objective.iter().map(|(j, w)| j * *w as f64).sum::<f64>() / weight.max(1) as f64;
        records.push(IterationRecord {
            iteration: t,
            snapshot,
            step_norm,
            model_value: sol.model_value,
            est_objective,
            grad_norm: g.norm(),
            grad_samples,
            hess_samples,
            correction_batch,
            cum_grad_samples: cum_grad,
            cum_hess_samples: cum_hess,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("{} t={t} |h|={step_norm:.3e} |g|={:.3e} J={est_objective:.4}", algorithm.name(), g.norm());

        theta += &sol.h;
        if step_norm <= threshold {
            termination = Termination::StepNorm;
            break;
        }
        if truncated {
            termination = Termination::SampleCap;
            break;
        }
        h_prev = sol.h;
    }

    Ok(RunRecord { algorithm, iterations: records, termination, theta, steps, samples })
}
