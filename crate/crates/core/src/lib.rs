//! Variance-reduced cubic-regularized policy Newton (VR-CR-PN).
//!
//! The crate provides
//!
//! * environments ([`mdp::CartPole`], [`mdp::TabularMdp`]) and log-linear
//!   policies with analytic derivatives up to third order,
//! * unbiased gradient and Hessian estimators for the truncated discounted
//!   objective, plus the Hessian-vector-product correction used for variance
//!   reduction ([`estimators`]),
//! * a global solver for the cubic-regularized Newton subproblem ([`cubic`]),
//! * the optimizer loop, its CR-PN baseline, and the theory-driven
//!   hyperparameter planner ([`optimizer`]),
//! * exact oracles for tabular MDPs used to verify all of the above
//!   ([`oracle`]).
//!
//! Rewards are treated as costs internally: the optimizer minimizes
//! `J(theta) = E[sum_k gamma^k c_k]` with `c_k = -r_k`.

pub mod cubic;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod mdp;
pub mod optimizer;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
