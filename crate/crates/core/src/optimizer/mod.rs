//! The VR-CR-PN loop, its CR-PN baseline, and hyperparameter planning.

mod config;
mod provider;
mod run;

pub use config::{plan_hyperparams, sample_budget, AlgoConfig, Mode, PracticalSettings, SampleBudget, SampleUnit};
pub use provider::{Batch, Budget, EstimateProvider, Evaluation, ExactTabular, MonteCarlo};
pub use run::{cr_pn, run, vr_cr_pn, Algorithm, IterationRecord, RunRecord, Termination};
