//! Benchmark driver for VR-CR-PN and CR-PN: configuration, runs, CSV
//! learning curves, summaries and comparisons.

pub mod compare;
pub mod config;
pub mod error;
pub mod plan;
pub mod runner;

use std::fs;
use std::path::{Path, PathBuf};

pub use error::{BenchError, Result};
use vrcrpn::optimizer::Mode;

/// Command-line overrides for `run`.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub oracle: bool,
}

/// Load, override, run and write outputs. Returns the output directory and
/// the per-run outcomes.
pub fn run_config_file(path: &Path, overrides: &RunOverrides) -> Result<(PathBuf, Vec<runner::Outcome>)> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = config::ExperimentConfig::parse(&text).map_err(|e| match e {
        BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(seed) = overrides.seed {
        cfg.experiment.seeds = Some(vec![seed]);
        cfg.experiment.repetitions = None;
    }
    if let Some(dir) = &overrides.out_dir {
        cfg.experiment.out_dir = dir.clone();
    }
    if let Some(mode) = overrides.mode {
        cfg.algorithm.mode = mode;
    }
    if overrides.oracle {
        cfg.algorithm.oracle = true;
    }
    let resolved = cfg.resolve()?;
    let outcomes = runner::execute(&resolved)?;
    runner::write_outputs(&resolved.out_dir, &outcomes, &cfg, &resolved, &text)?;
    Ok((resolved.out_dir.clone(), outcomes))
}
