//! Prints the theory-mode schedule for given accuracy targets.

use std::fmt::Write;

use vrcrpn::estimators::SmoothnessConstants;
use vrcrpn::mdp::policy_derivative_bounds;
use vrcrpn::optimizer::{plan_hyperparams, sample_budget, Mode, SampleBudget};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    pub epsilon: f64,
    pub failure_prob: f64,
    pub gamma: f64,
    pub r_max: f64,
    pub c_phi: f64,
    pub dim: usize,
}

pub fn render_plan(req: &PlanRequest) -> Result<String> {
    let bounds = policy_derivative_bounds(req.c_phi).map_err(config_err)?;
    let c = SmoothnessConstants::new(req.r_max, req.gamma, bounds).map_err(config_err)?;
    let cfg = plan_hyperparams(req.epsilon, req.failure_prob, &c, req.dim, Mode::Theory, None).map_err(config_err)?;
    let mut out = String::new();
    let _ = writeln!(out, "# constants");
    let _ = writeln!(out, "G1 = {}\nG2 = {}\nG3 = {}", bounds.g1, bounds.g2, bounds.g3);
    let _ = writeln!(out, "L0 = {}\nL1 = {}\nL2 = {}\nL3 = {}", c.l0, c.l1, c.l2, c.l3);
    let _ = writeln!(out, "# schedule");
    let _ = writeln!(out, "M = {}", cfg.m);
    let _ = writeln!(out, "T = {}", cfg.max_iterations);
    let _ = writeln!(out, "S = {}", cfg.inner_loop);
    let _ = writeln!(out, "b_g = {}", cfg.snapshot_batch);
    let _ = writeln!(out, "b_H = {}", cfg.hessian_batch);
    let _ = writeln!(out, "B_g = {}", cfg.correction_scale);
    let _ = writeln!(out, "H = {}", cfg.horizon);
    let _ = writeln!(out, "step_threshold = {}", cfg.step_threshold());
    if let SampleBudget::Planned { gradient_total, hessian_total } = sample_budget(&cfg, &c).map_err(config_err)? {
        let _ = writeln!(out, "# planned trajectories");
        let _ = writeln!(out, "gradient_total = {gradient_total}");
        let _ = writeln!(out, "hessian_total = {hessian_total}");
    }
    Ok(out)
}
