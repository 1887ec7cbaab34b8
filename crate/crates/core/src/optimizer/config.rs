//! Hyperparameters and the theory-driven planner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{truncation_horizon, SmoothnessConstants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every schedule quantity comes from the convergence analysis.
    Theory,
    /// Iteration count, batches, inner-loop length and horizon are user
    /// supplied.
    Practical,
}

/// Unit in which the sample cap is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleUnit {
    #[default]
    Trajectories,
    Steps,
}

/// User-supplied schedule for practical mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PracticalSettings {
    pub max_iterations: u64,
    pub inner_loop: u64,
    pub snapshot_batch: u64,
    pub hessian_batch: u64,
    pub correction_scale: u64,
    pub horizon: usize,
    /// Replaces the theory value `30 L3` of the cubic coefficient.
    pub cubic_coefficient: Option<f64>,
}

/// Complete hyperparameter set of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub epsilon: f64,
    /// Failure probability `P` of the high-probability guarantee.
    pub failure_prob: f64,
    pub gamma: f64,
    /// Cubic coefficient `M`.
    pub m: f64,
    /// `L3`, which fixes the step-norm stopping threshold.
    pub l3: f64,
    /// `T`.
    pub max_iterations: u64,
    /// `S`: a fresh snapshot gradient is taken whenever `t mod S == 0`.
    pub inner_loop: u64,
    /// `b_g`.
    pub snapshot_batch: u64,
    /// `b_H`.
    pub hessian_batch: u64,
    /// `B_g`: a correction step draws `ceil(B_g |h_{t-1}|^2)` trajectories.
    pub correction_scale: u64,
    /// Truncation horizon `H`.
    pub horizon: usize,
    pub mode: Mode,
    pub sample_cap: Option<u64>,
    pub sample_unit: SampleUnit,
    pub seed: u64,
}

impl AlgoConfig {
    /// Stop once `|h_t| <= sqrt(eps / (4 L3))`.
    pub fn step_threshold(&self) -> f64 {
        (self.epsilon / (4.0 * self.l3)).sqrt()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sample_cap(mut self, cap: Option<u64>, unit: SampleUnit) -> Self {
        self.sample_cap = cap;
        self.sample_unit = unit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_accuracy(self.epsilon, self.failure_prob)?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid("gamma", format!("must lie in [0, 1), got {}", self.gamma)));
        }
        for (name, v) in [("M", self.m), ("L3", self.l3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [
            ("max_iterations", self.max_iterations),
            ("inner_loop", self.inner_loop),
            ("snapshot_batch", self.snapshot_batch),
            ("hessian_batch", self.hessian_batch),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1".into()));
            }
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1".into()));
        }
        if self.sample_cap == Some(0) {
            return Err(invalid("sample_cap", "must be positive when set".into()));
        }
        Ok(())
    }
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

fn check_accuracy(epsilon: f64, failure_prob: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(failure_prob > 0.0 && failure_prob < 1.0) {
        return Err(invalid("failure_prob", format!("must lie in (0, 1), got {failure_prob}")));
    }
    Ok(())
}

fn ceil_count(x: f64, name: &'static str) -> Result<u64> {
    let c = x.ceil();
    // 2^64 is exactly representable; anything at or above it does not fit
    if !c.is_finite() || c >= 18_446_744_073_709_551_616.0 {
        return Err(Error::PlanOverflow(name));
    }
    Ok((c as u64).max(1))
}

/// Hyperparameters for target accuracy `epsilon` and failure probability
/// `failure_prob` in a `d`-dimensional parameter space.
///
/// Theory mode returns the ceilings of
///
/// ```text
/// M   = 30 L3
/// T   = 7 L0 sqrt(L3) eps^-3/2
/// S   = (L1 / L2) sqrt(L3 / eps)
/// b_g = 2592 L1^2 log(3T/P)^2 / eps^2
/// b_H = 144 (L2^2 / L3) log(3Td/P) / eps
/// B_g = 2592 L2^2 log(3T/P)^2 S / eps^2
/// ```
///
/// with the already-rounded `T` and `S` substituted on the right-hand sides,
/// and `H` from [`truncation_horizon`]. Practical mode keeps `M` (unless
/// overridden) and the stopping rule and takes the rest from `practical`.
pub fn plan_hyperparams(
    epsilon: f64,
    failure_prob: f64,
    constants: &SmoothnessConstants,
    d: usize,
    mode: Mode,
    practical: Option<PracticalSettings>,
) -> Result<AlgoConfig> {
    check_accuracy(epsilon, failure_prob)?;
    if d == 0 {
        return Err(invalid("d", "must be at least 1".into()));
    }
    let c = constants;
    let base = AlgoConfig {
        epsilon,
        failure_prob,
        gamma: c.gamma,
        m: 30.0 * c.l3,
        l3: c.l3,
        max_iterations: 1,
        inner_loop: 1,
        snapshot_batch: 1,
        hessian_batch: 1,
        correction_scale: 0,
        horizon: 1,
        mode,
        sample_cap: None,
        sample_unit: SampleUnit::Trajectories,
        seed: 0,
    };
    let config = match mode {
        Mode::Theory => {
            let t = ceil_count(7.0 * c.l0 * c.l3.sqrt() * epsilon.powf(-1.5), "T")?;
            let s = ceil_count(c.l1 / c.l2 * c.l3.sqrt() * epsilon.powf(-0.5), "S")?;
            let log_t = (3.0 * t as f64 / failure_prob).ln();
            let log_td = (3.0 * t as f64 * d as f64 / failure_prob).ln();
            let eps2 = epsilon * epsilon;
            AlgoConfig {
                max_iterations: t,
                inner_loop: s,
                snapshot_batch: ceil_count(2592.0 * c.l1 * c.l1 * log_t * log_t / eps2, "b_g")?,
                hessian_batch: ceil_count(144.0 * c.l2 * c.l2 / c.l3 * log_td / epsilon, "b_H")?,
                correction_scale: ceil_count(2592.0 * c.l2 * c.l2 * log_t * log_t * s as f64 / eps2, "B_g")?,
                horizon: truncation_horizon(c.gamma, epsilon, c.bounds.g1, c.bounds.g2, c.r_max, c.l3)?,
                ..base
            }
        }
        Mode::Practical => {
            let p = practical.ok_or_else(|| invalid("practical", "practical mode needs a schedule".into()))?;
            AlgoConfig {
                m: p.cubic_coefficient.unwrap_or(base.m),
                max_iterations: p.max_iterations,
                inner_loop: p.inner_loop,
                snapshot_batch: p.snapshot_batch,
                hessian_batch: p.hessian_batch,
                correction_scale: p.correction_scale,
                horizon: p.horizon,
                ..base
            }
        }
    };
    config.validate()?;
    Ok(config)
}

/// Planned trajectory totals of a theory-mode run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleBudget {
    Planned { gradient_total: u64, hessian_total: u64 },
    /// Practical schedules depend on realized step norms; the counts live in
    /// the run record.
    Realized,
}

/// Worst-case sample totals for a theory-mode configuration.
///
/// Gradient samples: `b_g ceil(T/S)` snapshot trajectories. Hessian samples:
/// `T b_H` plus the correction draws of the `T - ceil(T/S)` inner iterations.
/// The latter use the per-step descent of the analysis,
/// `(M/4 - 13 L3/6)|h_t|^3 - 3 eps^1.5 / (8 sqrt(L3))`, which bounds
/// `sum |h_t|^3` by a constant `C` given the `2 L0` range of `J`; Hölder then
/// gives a mean squared step of at most `(C/n)^(2/3)` over `n` correction
/// iterations, and each draws `ceil(B_g (C/n)^(2/3))` trajectories.
pub fn sample_budget(config: &AlgoConfig, constants: &SmoothnessConstants) -> Result<SampleBudget> {
    if config.mode == Mode::Practical {
        return Ok(SampleBudget::Realized);
    }
    config.validate()?;
    let t = config.max_iterations;
    let snapshots = t.div_ceil(config.inner_loop);
    let gradient_total = config
        .snapshot_batch
        .checked_mul(snapshots)
        .ok_or(Error::PlanOverflow("gradient_total"))?;
    let mut hessian_total = config
        .hessian_batch
        .checked_mul(t)
        .ok_or(Error::PlanOverflow("hessian_total"))?;
    let corrections = t - snapshots;
    if corrections > 0 {
        let descent = config.m / 4.0 - 13.0 * config.l3 / 6.0;
        if descent <= 0.0 {
            return Err(invalid("M", "too small for a finite correction budget".into()));
        }
        let slack = t as f64 * 3.0 * config.epsilon.powf(1.5) / (8.0 * config.l3.sqrt());
        let cube_sum = (2.0 * constants.l0 + slack) / descent;
        let mean_sq = (cube_sum / corrections as f64).powf(2.0 / 3.0);
        let per_iteration = ceil_count(config.correction_scale as f64 * mean_sq, "correction batch")?;
        hessian_total = per_iteration
            .checked_mul(corrections)
            .and_then(|c| c.checked_add(hessian_total))
            .ok_or(Error::PlanOverflow("hessian_total"))?;
    }
    Ok(SampleBudget::Planned { gradient_total, hessian_total })
}
