//! Per-command configuration records and the flag/file/env resolution
//! order: built-in defaults, then `--config` JSON (a bare config or a
//! manifest wrapping one), then explicit flags, then the `DEFERKIT_SEED`
//! environment variable.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use deferkit::aggregation::DecisionRule;
use deferkit::losses::BudgetTransform;

use crate::CliError;

pub const SEED_ENV: &str = "DEFERKIT_SEED";

/// Loads a config, accepting either the bare config object or a run
/// manifest whose `config` field holds one.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {path:?}: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("invalid JSON in {path:?}: {e}")))?;
    let body = match value.get("config") {
        Some(inner) => inner.clone(),
        None => value,
    };
    serde_json::from_value(body)
        .map_err(|e| CliError::config(format!("invalid config in {path:?}: {e}")))
}

pub fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::config(format!("{SEED_ENV} must be an unsigned integer, got {raw:?}"))),
        Err(_) => Ok(None),
    }
}

pub fn parse_rule(name: &str) -> Result<DecisionRule, CliError> {
    Ok(match name {
        "top_k_membership" => DecisionRule::TopKMembership,
        "majority_vote" => DecisionRule::MajorityVote,
        "weighted_vote" => DecisionRule::WeightedVote,
        "min_cost" => DecisionRule::MinCost,
        "uniform_average" => DecisionRule::UniformAverage,
        "weighted_average" => DecisionRule::WeightedAverage,
        other => {
            return Err(CliError::config(format!(
                "unknown decision rule {other:?} (expected top_k_membership, majority_vote, \
                 weighted_vote, min_cost, uniform_average, weighted_average)"
            )))
        }
    })
}

pub fn parse_xi(name: &str) -> Result<BudgetTransform, CliError> {
    Ok(match name {
        "identity" => BudgetTransform::Identity,
        "sqrt" => BudgetTransform::Sqrt,
        "log1p" => BudgetTransform::Log1p,
        other => {
            return Err(CliError::config(format!(
                "unknown budget transform {other:?} (expected identity, sqrt, log1p)"
            )))
        }
    })
}

/// The default regularization grid swept for the adaptive cardinality.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = vec![1e-9, 0.01, 0.05, 0.25, 0.5];
    let mut v = 1.0;
    while v <= 6.5 + 1e-9 {
        grid.push(v);
        v += 0.5;
    }
    grid
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub out: PathBuf,
    pub classes: usize,
    pub experts: usize,
    pub specialty: usize,
    pub competence: f64,
    pub n: usize,
    pub dim: usize,
    pub radius: f64,
    pub sigma: f64,
    pub test_fraction: f64,
    pub seed: u64,
    /// Fee schedule, most expensive expert first; experts beyond the list
    /// repeat the last fee.
    pub fees: Vec<f64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs/gen"),
            classes: 10,
            experts: 6,
            specialty: 5,
            competence: 0.94,
            n: 20_000,
            dim: 2,
            radius: 4.2,
            sigma: 1.0,
            test_fraction: 0.2,
            seed: 7,
            fees: vec![0.05, 0.045, 0.040, 0.035, 0.03],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPolicyConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub u: f64,
    pub validation_fraction: f64,
    /// Hidden width of the MLP scorer; 0 selects the linear scorer.
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainPolicyConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("runs/gen"),
            out: PathBuf::from("runs/policy"),
            epochs: 150,
            batch_size: 128,
            learning_rate: 0.08,
            momentum: 0.9,
            u: 1.0,
            validation_fraction: 0.1,
            hidden: 96,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainCardinalityConfig {
    pub data: PathBuf,
    pub policy: PathBuf,
    pub out: PathBuf,
    pub rule: String,
    pub lambda: f64,
    pub xi: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub u: f64,
    pub validation_fraction: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainCardinalityConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("runs/gen"),
            policy: PathBuf::from("runs/policy/policy.json"),
            out: PathBuf::from("runs/cardinality"),
            rule: "majority_vote".into(),
            lambda: 0.05,
            xi: "identity".into(),
            epochs: 60,
            batch_size: 128,
            learning_rate: 0.08,
            momentum: 0.9,
            u: 1.0,
            validation_fraction: 0.1,
            hidden: 64,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub data: PathBuf,
    pub policy: PathBuf,
    /// Fixed committee size; mutually exclusive with `cardinality`.
    pub k: Option<usize>,
    pub cardinality: Option<PathBuf>,
    pub rule: String,
    pub split: String,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("runs/gen"),
            policy: PathBuf::from("runs/policy/policy.json"),
            k: None,
            cardinality: None,
            rule: "majority_vote".into(),
            split: "test".into(),
            out: PathBuf::from("runs/eval/report.json"),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub data: PathBuf,
    pub policy: PathBuf,
    pub out: PathBuf,
    pub rule: String,
    pub xi: String,
    pub lambdas: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub u: f64,
    pub validation_fraction: f64,
    pub hidden: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("runs/gen"),
            policy: PathBuf::from("runs/policy/policy.json"),
            out: PathBuf::from("runs/sweep"),
            rule: "majority_vote".into(),
            xi: "identity".into(),
            lambdas: default_lambda_grid(),
            epochs: 40,
            batch_size: 128,
            learning_rate: 0.08,
            momentum: 0.9,
            u: 1.0,
            validation_fraction: 0.1,
            hidden: 64,
            seed: 7,
            threads: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyCmdConfig {
    pub out: PathBuf,
    pub checks: Vec<String>,
    pub inject_fault: bool,
    pub seed: u64,
}

impl Default for VerifyCmdConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs/verify/report.json"),
            checks: Vec::new(),
            inject_fault: false,
            seed: 7,
        }
    }
}
