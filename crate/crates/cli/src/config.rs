//! Experiment configuration: JSON schema, canonical form and hashing, sweep
//! axes.

use std::collections::BTreeMap;

use scorelab_core::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::result::Result as StdResult;

fn one() -> usize {
    1
}

fn default_mc_draws() -> usize {
    100_000
}

fn default_box_radius() -> f64 {
    6.0
}

fn default_grid_n() -> usize {
    201
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Kl]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    /// For DDPM the estimator is applied to each forward marginal ν_{hj}.
    pub estimator: EstimatorSpec,
    pub algorithm: Algorithm,
    pub params: RunParams,
    /// Langevin starting law; N(0, I) when absent. DDPM always starts at γ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub bounds: Vec<BoundRequest>,
    #[serde(default)]
    pub score_error: ScoreErrorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Path prefix for `<prefix>.csv`, `<prefix>.json`, `<prefix>.manifest.json`.
    pub output: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Algorithm {
    Ila,
    /// ILA with `substeps` Euler–Maruyama substeps of size h/substeps.
    Ild {
        substeps: usize,
    },
    /// Exact-score reference; the estimator is only used for error reports.
    Ula,
    Ddpm,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ila => "ila",
            Algorithm::Ild { .. } => "ild",
            Algorithm::Ula => "ula",
            Algorithm::Ddpm => "ddpm",
        }
    }

    pub fn substeps(&self) -> usize {
        match self {
            Algorithm::Ild { substeps } => *substeps,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub step_h: f64,
    pub num_steps_k: usize,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    /// DDPM forward-process rate; defaults to the target's LSI constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Point {
        x: Vec<f64>,
    },
    /// Start every chain at a draw from the target.
    Target,
}

/// Per-record quantities. Divergences are computed in closed form when the
/// run is affine-Gaussian; otherwise only the sampler's own estimate is
/// reported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Kl,
    Renyi {
        q: f64,
    },
    Fisher,
    /// Empirical mean and covariance of the live chains.
    Moments,
}

/// A bound to evaluate and audit. Constants not listed are derived from the
/// target, estimator and run; listed ones take precedence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "BoundEntry")]
pub struct BoundRequest {
    pub name: BoundName,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

impl BoundRequest {
    /// Label used in outputs; Rényi bounds carry their order.
    pub fn label(&self) -> String {
        match self.constants.get("q") {
            Some(q) if self.name.divergence(Some(*q)).is_some_and(|k| k != DivergenceKind::Kl) => {
                format!("{}_q{q}", self.name)
            }
            _ => self.name.to_string(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BoundEntry {
    Name(BoundName),
    Full {
        name: BoundName,
        #[serde(default)]
        constants: BTreeMap<String, f64>,
    },
}

impl From<BoundEntry> for BoundRequest {
    fn from(e: BoundEntry) -> Self {
        match e {
            BoundEntry::Name(name) => Self {
                name,
                constants: BTreeMap::new(),
            },
            BoundEntry::Full { name, constants } => Self { name, constants },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMethod {
    /// Closed form for affine estimators on Gaussian targets, else Monte Carlo.
    #[default]
    Auto,
    Analytic,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreErrorConfig {
    #[serde(default)]
    pub method: ErrorMethod,
    #[serde(default = "default_mc_draws")]
    pub n: usize,
    /// Defaults to the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_box_radius")]
    pub box_radius: f64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// MGF order r for every bound; by default each bound uses its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mgf_order: Option<f64>,
}

impl Default for ScoreErrorConfig {
    fn default() -> Self {
        Self {
            method: ErrorMethod::Auto,
            n: default_mc_draws(),
            seed: None,
            box_radius: default_box_radius(),
            grid_n: default_grid_n(),
            mgf_order: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Names accepted as sweep axes.
pub const SWEEP_PARAMETERS: &[&str] = &[
    "step_h",
    "num_steps_k",
    "chains",
    "record_every",
    "seed",
    "alpha",
    "substeps",
    "alpha_hat",
    "eta",
];

fn as_count(name: &str, v: f64) -> StdResult<usize, String> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(format!("{name} needs a non-negative integer, got {v}"))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> StdResult<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Sorted-key JSON of the parsed config with defaults filled in.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&canonicalize(value)).expect("value serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn mc_seed(&self) -> u64 {
        self.score_error.seed.unwrap_or(self.seed)
    }

    /// Copy of the config with one sweep axis set to `value`; the sweep
    /// itself is dropped.
    pub fn with_parameter(&self, name: &str, value: f64) -> StdResult<Self, String> {
        let mut c = self.clone();
        c.sweep = None;
        match name {
            "step_h" => c.params.step_h = value,
            "num_steps_k" => c.params.num_steps_k = as_count(name, value)?,
            "chains" => c.params.chains = as_count(name, value)?,
            "record_every" => c.params.record_every = as_count(name, value)?,
            "seed" => c.seed = as_count(name, value)? as u64,
            "alpha" => c.params.alpha = Some(value),
            "substeps" => match &mut c.algorithm {
                Algorithm::Ild { substeps } => *substeps = as_count(name, value)?,
                other => return Err(format!("substeps applies to ild, not {}", other.name())),
            },
            "alpha_hat" => match &mut c.estimator {
                EstimatorSpec::Perturbed { alpha_hat } => *alpha_hat = value,
                _ => return Err("alpha_hat applies to the perturbed estimator only".into()),
            },
            "eta" => match &mut c.estimator {
                EstimatorSpec::KdePop { eta } | EstimatorSpec::KdeEmp { eta, .. } => *eta = value,
                _ => return Err("eta applies to KDE estimators only".into()),
            },
            other => {
                return Err(format!(
                    "unknown sweep parameter `{other}`; expected one of {}",
                    SWEEP_PARAMETERS.join(", ")
                ))
            }
        }
        Ok(c)
    }
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> = map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        other => other,
    }
}
