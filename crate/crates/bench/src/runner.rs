//! Executes a resolved experiment and writes its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use vrcrpn::mdp::LogLinearPolicy;
use vrcrpn::optimizer::{run, Algorithm, EstimateProvider, Evaluation, ExactTabular, MonteCarlo, RunRecord};
use vrcrpn::rng::StreamKey;

use crate::config::{EnvSpec, ExperimentConfig, Resolved};
use crate::error::{BenchError, Result};

/// Stream label reserved for final evaluation, away from the optimizer's
/// iteration-indexed streams.
const EVAL_STREAM: u64 = u64::MAX;

pub const CURVE_HEADER: [&str; 8] = [
    "iteration",
    "samples_cum_grad",
    "samples_cum_hess",
    "samples_cum_total",
    "step_norm",
    "est_J",
    "grad_est_norm",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub iteration: u64,
    pub samples_cum_grad: u64,
    pub samples_cum_hess: u64,
    pub samples_cum_total: u64,
    pub step_norm: f64,
    /// Estimated discounted return at the iterate.
    #[serde(rename = "est_J")]
    pub est_j: f64,
    pub grad_est_norm: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub seed: u64,
    pub final_return: f64,
    pub final_return_stderr: f64,
    pub iterations: u64,
    pub samples_total: u64,
    pub termination: String,
}

/// One optimizer run and the evaluation of its output.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub record: RunRecord,
    pub evaluation: Evaluation,
}

impl Outcome {
    pub fn curve(&self, record_wall_time: bool) -> Vec<CurveRow> {
        self.record
            .iterations
            .iter()
            .map(|it| CurveRow {
                iteration: it.iteration,
                samples_cum_grad: it.cum_grad_samples,
                samples_cum_hess: it.cum_hess_samples,
                samples_cum_total: it.cum_total_samples(),
                step_norm: it.step_norm,
                est_j: -it.est_objective,
                grad_est_norm: it.grad_norm,
                wall_ms: if record_wall_time { it.elapsed_ms } else { 0.0 },
            })
            .collect()
    }

    pub fn summary(&self) -> SummaryRow {
        SummaryRow {
            algorithm: self.algorithm.name().to_string(),
            seed: self.seed,
            final_return: self.evaluation.mean_return,
            final_return_stderr: self.evaluation.stderr,
            iterations: self.record.iterations.len() as u64,
            samples_total: self.record.total_samples(),
            termination: self.record.termination.name().to_string(),
        }
    }
}

fn run_one<P: EstimateProvider>(provider: &P, r: &Resolved, algorithm: Algorithm, seed: u64) -> Result<Outcome> {
    let theta0 = DVector::from_vec(r.theta0.clone());
    let config = r.algo.clone().with_seed(seed);
    let record = run(algorithm, provider, &theta0, &config)?;
    let evaluation = provider.evaluate(&record.theta, r.eval_batch, StreamKey::root(seed).child(EVAL_STREAM))?;
    log::info!(
        "{} seed {seed}: {} iterations, {} samples, {}, return {:.4}",
        algorithm.name(),
        record.iterations.len(),
        record.total_samples(),
        record.termination.name(),
        evaluation.mean_return
    );
    Ok(Outcome { algorithm, seed, record, evaluation })
}

fn run_all<P: EstimateProvider>(provider: &P, r: &Resolved) -> Result<Vec<Outcome>> {
    let jobs: Vec<(Algorithm, u64)> = r
        .algorithms
        .iter()
        .flat_map(|&a| r.seeds.iter().map(move |&s| (a, s)))
        .collect();
    jobs.par_iter().map(|&(a, s)| run_one(provider, r, a, s)).collect()
}

/// Run every (algorithm, seed) pair; results are ordered by algorithm, then seed.
pub fn execute(r: &Resolved) -> Result<Vec<Outcome>> {
    let (gamma, horizon) = (r.algo.gamma, r.algo.horizon);
    match &r.env {
        EnvSpec::CartPole(env, features) => {
            let policy = LogLinearPolicy::new(features.clone());
            run_all(&MonteCarlo::new(env, &policy, gamma, horizon)?, r)
        }
        EnvSpec::Tabular(mdp, features) => {
            let policy = LogLinearPolicy::new(features.clone());
            if r.oracle {
                run_all(&ExactTabular::new(mdp, &policy, gamma, horizon)?, r)
            } else {
                run_all(&MonteCarlo::new(mdp, &policy, gamma, horizon)?, r)
            }
        }
    }
}

/// Git-style content hash: SHA-256 over `"blob <len>\0" + content`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

pub fn curve_path(dir: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    dir.join(format!("{}_seed{seed}.csv", algorithm.name()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 7] = [
    "algorithm",
    "seed",
    "final_return",
    "final_return_stderr",
    "iterations",
    "samples_total",
    "termination",
];

/// Write curves, summaries and `metadata.toml` under `dir`.
pub fn write_outputs(dir: &Path, outcomes: &[Outcome], cfg: &ExperimentConfig, r: &Resolved, config_text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| BenchError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    for o in outcomes {
        write_csv(&curve_path(dir, o.algorithm, o.seed), &o.curve(r.record_wall_time), &CURVE_HEADER)?;
    }
    let rows: Vec<SummaryRow> = outcomes.iter().map(Outcome::summary).collect();
    write_csv(&dir.join("summary.csv"), &rows, &SUMMARY_HEADER)?;
    for a in &r.algorithms {
        let mine: Vec<SummaryRow> = rows.iter().filter(|x| x.algorithm == a.name()).cloned().collect();
        write_csv(&dir.join(format!("summary_{}.csv", a.name())), &mine, &SUMMARY_HEADER)?;
    }
    fs::write(dir.join("metadata.toml"), metadata(cfg, r, config_text))?;
    Ok(())
}

/// The resolved configuration (re-runnable as is) followed by an ignored
/// `[provenance]` table with the config hash and derived constants.
pub fn metadata(cfg: &ExperimentConfig, r: &Resolved, config_text: &str) -> String {
    let mut out = cfg.resolved_config(r).to_toml();
    let c = &r.constants;
    let mut prov = toml::Table::new();
    prov.insert("config_hash".into(), content_hash(config_text.as_bytes()).into());
    prov.insert("hash_algorithm".into(), "sha256 over \"blob <len>\\0\" + config bytes".into());
    prov.insert("crate_version".into(), env!("CARGO_PKG_VERSION").into());
    for (k, v) in [("l0", c.l0), ("l1", c.l1), ("l2", c.l2), ("l3", c.l3), ("r_max", c.r_max), ("g1", c.bounds.g1), ("g2", c.bounds.g2), ("g3", c.bounds.g3)] {
        prov.insert(k.into(), v.into());
    }
    let a = &r.algo;
    prov.insert("cubic_coefficient".into(), a.m.into());
    prov.insert("step_threshold".into(), a.step_threshold().into());
    for (k, v) in [
        ("max_iterations", a.max_iterations),
        ("inner_loop", a.inner_loop),
        ("snapshot_batch", a.snapshot_batch),
        ("hessian_batch", a.hessian_batch),
        ("correction_scale", a.correction_scale),
    ] {
        prov.insert(k.into(), toml::Value::Integer(v.min(i64::MAX as u64) as i64));
    }
    prov.insert("horizon".into(), toml::Value::Integer(a.horizon as i64));
    prov.insert("oracle".into(), r.oracle.into());
    prov.insert("est_J_units".into(), "discounted return under the configured gamma".into());
    if a.mode == vrcrpn::optimizer::Mode::Practical {
        prov.insert(
            "practical_note".into(),
            "practical-mode schedule values (T, S, batches, H, M) are artifact choices, not theory outputs".into(),
        );
    }
    let mut wrapper = toml::Table::new();
    wrapper.insert("provenance".into(), prov.into());
    out.push('\n');
    out.push_str(&toml::to_string(&wrapper).expect("provenance serializes"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_for_sha256_objects() {
        // `git hash-object --object-format=sha256` of an empty file
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
        // and of "hello\n"
        assert_eq!(content_hash(b"hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
    }
}
