//! Experiment configuration: a TOML file with one section per concern.
//!
//! ```toml
//! [environment]
//! kind = "cartpole"          # or "tabular" with states/actions/transition/reward/initial_dist
//!
//! [policy]
//! feature_scale = 0.5        # tabular one-hot feature norm
//!
//! [algorithm]
//! gamma = 0.99
//! mode = "practical"
//! sample_cap = 50000
//!
//! [experiment]
//! repetitions = 10
//! ```
//!
//! Unknown keys are rejected. A `[provenance]` table is ignored on input so
//! that emitted metadata files can be fed back in.

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vrcrpn::estimators::{truncation_horizon, SmoothnessConstants};
use vrcrpn::mdp::{policy_derivative_bounds, CartPole, CartPoleFeatures, Environment, FeatureMap, TabularFeatures, TabularMdp};
use vrcrpn::optimizer::{plan_hyperparams, AlgoConfig, Algorithm, Mode, PracticalSettings, SampleUnit};

use crate::error::{config_err, BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Cartpole,
    Tabular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub kind: EnvKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_dist: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// Norm of the tabular one-hot features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_scale: Option<f64>,
    /// Initial parameters; zero (the uniform policy) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub gamma: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_failure_prob")]
    pub failure_prob: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_loop: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_batch: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_batch: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction_scale: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Practical-mode replacement for `M = 30 L3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cubic_coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_cap: Option<u64>,
    #[serde(default)]
    pub sample_unit: SampleUnit,
    /// Inject exact derivatives (tabular only).
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(default = "default_eval_batch")]
    pub eval_batch: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Fill the `wall_ms` column; off by default so outputs are reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub policy: PolicySection,
    pub algorithm: AlgorithmSection,
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing)]
    pub provenance: Option<toml::Table>,
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_failure_prob() -> f64 {
    0.1
}
fn default_mode() -> Mode {
    Mode::Practical
}
fn default_algorithms() -> Vec<String> {
    vec!["vr-cr-pn".into(), "cr-pn".into()]
}
fn default_eval_batch() -> u64 {
    2000
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

// practical-mode schedule defaults
const DEFAULT_MAX_ITERATIONS: u64 = 100_000;
const DEFAULT_INNER_LOOP: u64 = 5;
const DEFAULT_SNAPSHOT_BATCH: u64 = 100;
const DEFAULT_HESSIAN_BATCH: u64 = 20;
const DEFAULT_CORRECTION_SCALE: u64 = 10;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// A concrete environment with its policy class.
#[derive(Debug, Clone)]
pub enum EnvSpec {
    CartPole(CartPole, CartPoleFeatures),
    Tabular(TabularMdp, TabularFeatures),
}

/// Everything a run needs, with all defaults and planner outputs filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub env: EnvSpec,
    pub theta0: Vec<f64>,
    pub algo: AlgoConfig,
    pub constants: SmoothnessConstants,
    pub algorithms: Vec<Algorithm>,
    pub oracle: bool,
    pub seeds: Vec<u64>,
    pub eval_batch: u64,
    pub out_dir: PathBuf,
    pub record_wall_time: bool,
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| BenchError::Config(format!("[environment] missing key `{key}` for a tabular environment")))
}

fn parse_algorithm(name: &str) -> Result<Algorithm> {
    match name {
        "vr-cr-pn" => Ok(Algorithm::VrCrPn),
        "cr-pn" => Ok(Algorithm::CrPn),
        other => Err(BenchError::Config(format!("[algorithm] unknown algorithm `{other}` (expected vr-cr-pn or cr-pn)"))),
    }
}

impl ExperimentConfig {
    /// Validate and fill in every derived quantity.
    pub fn resolve(&self) -> Result<Resolved> {
        let e = &self.environment;
        let a = &self.algorithm;
        let env = match e.kind {
            EnvKind::Cartpole => {
                if e.states.is_some() || e.actions.is_some() || e.transition.is_some() || e.reward.is_some() || e.initial_dist.is_some() {
                    return Err(config_err("[environment] tabular keys given for kind = \"cartpole\""));
                }
                if self.policy.feature_scale.is_some() {
                    return Err(config_err("[policy] feature_scale applies to tabular environments only"));
                }
                let mut env = CartPole::default();
                if let Some(n) = e.max_steps {
                    if n == 0 {
                        return Err(config_err("[environment] max_steps must be at least 1"));
                    }
                    env.max_steps = n;
                }
                let features = CartPoleFeatures::new(&env);
                EnvSpec::CartPole(env, features)
            }
            EnvKind::Tabular => {
                if e.max_steps.is_some() {
                    return Err(config_err("[environment] max_steps applies to cartpole only"));
                }
                let mdp = TabularMdp::new(
                    require(&e.states, "states")?,
                    require(&e.actions, "actions")?,
                    require(&e.transition, "transition")?,
                    require(&e.reward, "reward")?,
                    require(&e.initial_dist, "initial_dist")?,
                )
                .map_err(|err| BenchError::Config(format!("[environment] {err}")))?;
                let scale = self.policy.feature_scale.unwrap_or(1.0);
                let features = TabularFeatures::new(mdp.state_count(), mdp.action_count(), scale)
                    .map_err(|err| BenchError::Config(format!("[policy] {err}")))?;
                EnvSpec::Tabular(mdp, features)
            }
        };
        if a.oracle && e.kind != EnvKind::Tabular {
            return Err(config_err("[algorithm] oracle mode needs a tabular environment"));
        }

        let (r_max, c_phi, dim) = match &env {
            EnvSpec::CartPole(env, f) => (env.reward_bound(), f.norm_bound(), f.dim()),
            EnvSpec::Tabular(mdp, f) => (mdp.reward_bound(), f.norm_bound(), f.dim()),
        };
        if r_max <= 0.0 {
            return Err(config_err("[environment] all rewards are zero; nothing to optimize"));
        }
        let bounds = policy_derivative_bounds(c_phi).map_err(|err| BenchError::Config(format!("[policy] {err}")))?;
        let constants = SmoothnessConstants::new(r_max, a.gamma, bounds).map_err(|err| BenchError::Config(format!("[algorithm] {err}")))?;

        let algo = match a.mode {
            Mode::Theory => {
                for (key, set) in [
                    ("max_iterations", a.max_iterations.is_some()),
                    ("inner_loop", a.inner_loop.is_some()),
                    ("snapshot_batch", a.snapshot_batch.is_some()),
                    ("hessian_batch", a.hessian_batch.is_some()),
                    ("correction_scale", a.correction_scale.is_some()),
                    ("horizon", a.horizon.is_some()),
                    ("cubic_coefficient", a.cubic_coefficient.is_some()),
                ] {
                    if set {
                        return Err(BenchError::Config(format!("[algorithm] `{key}` is fixed by the planner in theory mode")));
                    }
                }
                plan_hyperparams(a.epsilon, a.failure_prob, &constants, dim, Mode::Theory, None)
            }
            Mode::Practical => {
                if a.sample_cap.is_none() {
                    return Err(config_err("[algorithm] practical mode requires `sample_cap`"));
                }
                let horizon = match a.horizon {
                    Some(h) => h,
                    None => truncation_horizon(a.gamma, a.epsilon, bounds.g1, bounds.g2, r_max, constants.l3)
                        .map_err(|err| BenchError::Config(format!("[algorithm] {err}")))?,
                };
                let settings = PracticalSettings {
                    max_iterations: a.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS),
                    inner_loop: a.inner_loop.unwrap_or(DEFAULT_INNER_LOOP),
                    snapshot_batch: a.snapshot_batch.unwrap_or(DEFAULT_SNAPSHOT_BATCH),
                    hessian_batch: a.hessian_batch.unwrap_or(DEFAULT_HESSIAN_BATCH),
                    correction_scale: a.correction_scale.unwrap_or(DEFAULT_CORRECTION_SCALE),
                    horizon,
                    cubic_coefficient: a.cubic_coefficient,
                };
                plan_hyperparams(a.epsilon, a.failure_prob, &constants, dim, Mode::Practical, Some(settings))
            }
        }
        .map_err(|err| BenchError::Config(format!("[algorithm] {err}")))?
        .with_sample_cap(a.sample_cap, a.sample_unit);
        algo.validate().map_err(|err| BenchError::Config(format!("[algorithm] {err}")))?;

        if a.algorithms.is_empty() {
            return Err(config_err("[algorithm] `algorithms` must name at least one algorithm"));
        }
        let algorithms = a.algorithms.iter().map(|n| parse_algorithm(n)).collect::<Result<Vec<_>>>()?;
        if algorithms.iter().collect::<HashSet<_>>().len() != algorithms.len() {
            return Err(config_err("[algorithm] `algorithms` lists an algorithm twice"));
        }

        let x = &self.experiment;
        let seeds = match (&x.seeds, x.repetitions) {
            (Some(s), Some(r)) if s.len() != r => {
                return Err(BenchError::Config(format!("[experiment] repetitions = {r} but {} seeds listed", s.len())))
            }
            (Some(s), _) => s.clone(),
            (None, Some(r)) => (0..r as u64).collect(),
            (None, None) => vec![0],
        };
        if seeds.is_empty() {
            return Err(config_err("[experiment] repetitions must be at least 1"));
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return Err(config_err("[experiment] seeds must be distinct"));
        }
        if x.eval_batch == 0 {
            return Err(config_err("[experiment] eval_batch must be at least 1"));
        }

        let theta0 = match &self.policy.theta0 {
            Some(t) if t.len() != dim => {
                return Err(BenchError::Config(format!("[policy] theta0 has {} entries, expected {dim}", t.len())))
            }
            Some(t) if t.iter().any(|v| !v.is_finite()) => return Err(config_err("[policy] theta0 must be finite")),
            Some(t) => t.clone(),
            None => vec![0.0; dim],
        };

        Ok(Resolved {
            env,
            theta0,
            algo,
            constants,
            algorithms,
            oracle: a.oracle,
            seeds,
            eval_batch: x.eval_batch,
            out_dir: x.out_dir.clone(),
            record_wall_time: x.record_wall_time,
        })
    }

    /// The same experiment with every default written out.
    pub fn resolved_config(&self, r: &Resolved) -> ExperimentConfig {
        let mut out = self.clone();
        out.provenance = None;
        let a = &mut out.algorithm;
        if a.mode == Mode::Practical {
            a.max_iterations = Some(r.algo.max_iterations);
            a.inner_loop = Some(r.algo.inner_loop);
            a.snapshot_batch = Some(r.algo.snapshot_batch);
            a.hessian_batch = Some(r.algo.hessian_batch);
            a.correction_scale = Some(r.algo.correction_scale);
            a.horizon = Some(r.algo.horizon);
            a.cubic_coefficient = Some(r.algo.m);
        }
        a.algorithms = r.algorithms.iter().map(|x| x.name().to_string()).collect();
        out.experiment.seeds = Some(r.seeds.clone());
        out.experiment.repetitions = Some(r.seeds.len());
        if let EnvSpec::CartPole(env, _) = &r.env {
            out.environment.max_steps = Some(env.max_steps);
        }
        if let EnvSpec::Tabular(_, f) = &r.env {
            out.policy.feature_scale = Some(f.norm_bound());
        }
        out.policy.theta0 = Some(r.theta0.clone());
        out
    }
}
