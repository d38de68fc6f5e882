//! Mini-batch empirical risk minimization for the deferral policy and the
//! cardinality function, plus joint inference.
//!
//! The policy trainer minimizes the batch-mean deferral surrogate with
//! plain SGD (optional momentum), reshuffling each epoch with the run
//! seed, and returns the checkpoint with the lowest validation surrogate.
//! Because the surrogate carries no cardinality input, the returned policy
//! serves every k without retraining.
//!
//! The cardinality trainer freezes the policy, ranks all entities per
//! example once, scores every candidate committee size by the
//! cardinality-aware loss, and fits the candidate scorer against the
//! normalized weights. Argmax ties at inference resolve to the smallest
//! candidate, the same rule used during weight construction.

use std::io::Write;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_classify, CardinalityChoice, DecisionRule};
use crate::datasets::Dataset;
use crate::entities::{cost_vector, EntityPredictions, EntitySet, OutputValue, TaskPenalty};
use crate::error::{Error, Result};
use crate::losses::{
    cardinality_loss_profile, cardinality_weights, deferral_surrogate, deferral_surrogate_grad,
    weighted_comp_sum, weighted_comp_sum_grad, CardinalityLossConfig, CommitteeExample,
    CompSumParam,
};
use crate::models::{sgd_step, Architecture, ScoreModel};
use crate::selection::{top_k, ScoreVector, TopKSet};

/// Divergence guard: a batch loss beyond this aborts the run. Surrogate
/// weights are bounded at this scale, so explosion means a config error.
const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub u: CompSumParam,
    pub validation_fraction: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be a finite non-negative real, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(0.0 < self.validation_fraction && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 128,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 7,
            u: CompSumParam::LOGISTIC,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_surrogate: f64,
    pub val_surrogate: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose checkpoint was returned (lowest validation surrogate).
    pub best_epoch: usize,
}

impl TrainLog {
    /// CSV stream `epoch,train_surrogate,val_surrogate,wall_ms`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_surrogate,val_surrogate,wall_ms")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:?},{:?},{}",
                r.epoch, r.train_surrogate, r.val_surrogate, r.wall_ms
            )?;
        }
        Ok(())
    }
}

/// Deterministic Fisher-Yates shuffle.
fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

fn validation_split(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, rng);
    let n_val = ((fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let val = order[..n_val].to_vec();
    let train = order[n_val..].to_vec();
    (train, val)
}

/// Shared mini-batch loop. `per_example` evaluates one example's loss and
/// accumulates its parameter gradient; `eval_loss` scores one example
/// without gradients.
fn run_sgd(
    model: &mut ScoreModel,
    features: &[&[f64]],
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    loss_and_grad: &mut dyn FnMut(&ScoreModel, usize, &mut [f64]) -> Result<f64>,
    eval_loss: &mut dyn FnMut(&ScoreModel, usize) -> Result<f64>,
) -> Result<TrainLog> {
    let mut velocity = vec![0.0; model.params().len()];
    let mut grad = vec![0.0; model.params().len()];
    let mut order = train_idx.to_vec();
    let mut best_params = model.params().to_vec();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        shuffle(&mut order, rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &idx in batch {
                batch_loss += loss_and_grad(model, idx, &mut grad)?;
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() || batch_loss > DIVERGENCE_LIMIT {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: batch_no + 1,
                    loss: batch_loss,
                });
            }
            grad.iter_mut().for_each(|g| *g *= scale);
            sgd_step(
                model.params_mut(),
                &mut velocity,
                &grad,
                config.learning_rate,
                config.momentum,
            );
            epoch_loss += batch_loss * batch.len() as f64;
        }
        let train_surrogate = epoch_loss / order.len() as f64;
        let mut val_surrogate = 0.0;
        for &idx in val_idx {
            val_surrogate += eval_loss(model, idx)?;
        }
        val_surrogate /= val_idx.len() as f64;
        if val_surrogate < best_val {
            best_val = val_surrogate;
            best_params.copy_from_slice(model.params());
            best_epoch = epoch + 1;
        }
        records.push(EpochRecord {
            epoch: epoch + 1,
            train_surrogate,
            val_surrogate,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }
    model.params_mut().copy_from_slice(&best_params);
    let _ = features;
    Ok(TrainLog {
        records,
        best_epoch,
    })
}

/// Trains the deferral policy by minimizing the batch-mean deferral
/// surrogate. The returned checkpoint is the one with the lowest
/// validation surrogate and serves every cardinality k.
pub fn train_policy(
    dataset: &Dataset,
    set: &EntitySet,
    preds: &EntityPredictions,
    penalty: TaskPenalty,
    arch: Architecture,
    config: &TrainConfig,
) -> Result<(ScoreModel, TrainLog)> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    if arch.output_dim() != set.size() {
        return Err(Error::LengthMismatch {
            what: "policy output dimension",
            expected: set.size(),
            found: arch.output_dim(),
        });
    }
    if arch.input_dim() != dataset.feature_dim {
        return Err(Error::LengthMismatch {
            what: "policy input dimension",
            expected: dataset.feature_dim,
            found: arch.input_dim(),
        });
    }
    // Entity costs are fixed per example; compute them once.
    let costs: Vec<Vec<f64>> = dataset
        .examples
        .iter()
        .map(|ex| cost_vector(set, preds, ex.id, &ex.target, penalty))
        .collect::<Result<_>>()?;
    let features: Vec<&[f64]> = dataset.examples.iter().map(|e| e.features.as_slice()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_idx, val_idx) = validation_split(dataset.len(), config.validation_fraction, &mut rng);
    let mut model = ScoreModel::init(arch, config.seed);
    let u = config.u;
    let log = run_sgd(
        &mut model,
        &features,
        &train_idx,
        &val_idx,
        config,
        &mut rng,
        &mut |model, idx, grad| {
            let (raw, cache) = model.forward_cached(features[idx])?;
            let scores = ScoreVector::new(raw)?;
            let loss = deferral_surrogate(&scores, &costs[idx], u)?;
            let upstream = deferral_surrogate_grad(&scores, &costs[idx], u)?;
            model.backward_into(features[idx], &cache, &upstream, grad)?;
            Ok(loss)
        },
        &mut |model, idx| {
            let scores = ScoreVector::new(model.forward(features[idx])?)?;
            deferral_surrogate(&scores, &costs[idx], u)
        },
    )?;
    Ok((model, log))
}

/// Per-example cardinality supervision precomputed from a frozen policy:
/// the full ranking and the surrogate weights over candidate sizes.
fn cardinality_targets(
    dataset: &Dataset,
    policy: &ScoreModel,
    set: &EntitySet,
    preds: &EntityPredictions,
    card_config: &CardinalityLossConfig,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let fees = set.fees();
    let mut weights = Vec::with_capacity(dataset.len());
    let mut degenerate = 0usize;
    for ex in &dataset.examples {
        let scores = ScoreVector::new(policy.forward(&ex.features)?)?;
        let ranking = top_k(&scores, set.size())?;
        let row = preds.get(ex.id)?;
        let example = CommitteeExample {
            predictions: row,
            target: &ex.target,
            policy_scores: &scores,
        };
        let profile = cardinality_loss_profile(&ranking, &example, card_config, &fees)?;
        let (w, was_degenerate) = cardinality_weights(&profile);
        if was_degenerate {
            degenerate += 1;
        }
        weights.push(w);
    }
    Ok((weights, degenerate))
}

/// Trains the cardinality function against a frozen policy. For each
/// example the policy's full ranking is scored at every candidate size;
/// the candidate scorer is then fit to the normalized weights with the
/// comp-sum surrogate.
pub fn train_cardinality(
    dataset: &Dataset,
    policy: &ScoreModel,
    set: &EntitySet,
    preds: &EntityPredictions,
    card_config: &CardinalityLossConfig,
    arch: Architecture,
    config: &TrainConfig,
) -> Result<(ScoreModel, TrainLog)> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    if arch.output_dim() != set.size() {
        return Err(Error::LengthMismatch {
            what: "cardinality output dimension",
            expected: set.size(),
            found: arch.output_dim(),
        });
    }
    let (weights, degenerate) = cardinality_targets(dataset, policy, set, preds, card_config)?;
    if degenerate > 0 {
        log::info!(
            "cardinality training: {degenerate}/{} examples have a flat loss profile",
            dataset.len()
        );
    }
    let features: Vec<&[f64]> = dataset.examples.iter().map(|e| e.features.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_idx, val_idx) = validation_split(dataset.len(), config.validation_fraction, &mut rng);
    let mut model = ScoreModel::init(arch, config.seed);
    let u = config.u;
    let log = run_sgd(
        &mut model,
        &features,
        &train_idx,
        &val_idx,
        config,
        &mut rng,
        &mut |model, idx, grad| {
            let (raw, cache) = model.forward_cached(features[idx])?;
            let scores = ScoreVector::new(raw)?;
            let loss = weighted_comp_sum(&scores, &weights[idx], u)?;
            let upstream = weighted_comp_sum_grad(&scores, &weights[idx], u)?;
            model.backward_into(features[idx], &cache, &upstream, grad)?;
            Ok(loss)
        },
        &mut |model, idx| {
            let scores = ScoreVector::new(model.forward(features[idx])?)?;
            weighted_comp_sum(&scores, &weights[idx], u)
        },
    )?;
    Ok((model, log))
}

/// Trains a plain squared-error regressor (single output); used for the
/// two-stage base predictor. The `u` field of the config is ignored.
pub fn train_regressor(
    dataset: &Dataset,
    arch: Architecture,
    config: &TrainConfig,
) -> Result<(ScoreModel, TrainLog)> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    if arch.output_dim() != 1 {
        return Err(Error::LengthMismatch {
            what: "regressor output dimension",
            expected: 1,
            found: arch.output_dim(),
        });
    }
    let targets: Vec<f64> = dataset
        .examples
        .iter()
        .map(|e| e.target.as_real())
        .collect::<Result<_>>()?;
    let features: Vec<&[f64]> = dataset.examples.iter().map(|e| e.features.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_idx, val_idx) = validation_split(dataset.len(), config.validation_fraction, &mut rng);
    let mut model = ScoreModel::init(arch, config.seed);
    let log = run_sgd(
        &mut model,
        &features,
        &train_idx,
        &val_idx,
        config,
        &mut rng,
        &mut |model, idx, grad| {
            let (raw, cache) = model.forward_cached(features[idx])?;
            let err = raw[0] - targets[idx];
            model.backward_into(features[idx], &cache, &[2.0 * err], grad)?;
            Ok(err * err)
        },
        &mut |model, idx| {
            let raw = model.forward(features[idx])?;
            let err = raw[0] - targets[idx];
            Ok(err * err)
        },
    )?;
    Ok((model, log))
}

/// Builds the two-stage entity pool for a regression dataset: a base
/// predictor fit on the whole training split, plus experts fit on
/// overlapping localized regions (quantile bands of a seeded random
/// projection), each with a consultation fee from the schedule. Returns
/// the entity set and the prediction table over `full`'s examples.
pub fn build_two_stage_regression_pool(
    train: &Dataset,
    full: &Dataset,
    n_experts: usize,
    fees: &[f64],
    hidden: usize,
    config: &TrainConfig,
) -> Result<(EntitySet, EntityPredictions)> {
    if train.len() < 4 {
        return Err(Error::EmptyDataset);
    }
    let arch = |seed_dim: usize| -> crate::models::Architecture {
        if hidden == 0 {
            Architecture::Linear {
                input_dim: seed_dim,
                output_dim: 1,
            }
        } else {
            Architecture::Mlp {
                input_dim: seed_dim,
                hidden_dim: hidden,
                output_dim: 1,
                activation: crate::models::Activation::Tanh,
            }
        }
    };
    let (base, _) = train_regressor(train, arch(train.feature_dim), config)?;

    let mut experts = Vec::with_capacity(n_experts);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xa5a5_5a5a);
    for j in 0..n_experts {
        // Overlapping quantile band of a random projection; localized
        // competence with shared boundaries.
        let direction: Vec<f64> = {
            let raw: Vec<f64> = (0..train.feature_dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let norm: f64 = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
            raw.into_iter().map(|x| x / norm).collect()
        };
        let mut projections: Vec<(f64, usize)> = train
            .examples
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                (
                    direction.iter().zip(&ex.features).map(|(d, f)| d * f).sum(),
                    i,
                )
            })
            .collect();
        projections.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = projections.len();
        let lo = ((j as f64 / n_experts as f64 - 0.15).max(0.0) * n as f64) as usize;
        let hi = (((j + 1) as f64 / n_experts as f64 + 0.15).min(1.0) * n as f64) as usize;
        let member_idx: Vec<usize> = projections[lo..hi.max(lo + 1).min(n)]
            .iter()
            .map(|&(_, i)| i)
            .collect();
        let subset = if member_idx.len() < 20 {
            train.clone()
        } else {
            Dataset {
                feature_dim: train.feature_dim,
                examples: member_idx
                    .iter()
                    .map(|&i| train.examples[i].clone())
                    .collect(),
                conditionals: None,
            }
        };
        let mut expert_cfg = *config;
        expert_cfg.seed = config.seed.wrapping_add(101 + j as u64);
        let (model, _) = train_regressor(&subset, arch(train.feature_dim), &expert_cfg)?;
        experts.push(model);
    }

    let expert_costs: Vec<(f64, f64)> = (0..n_experts)
        .map(|j| {
            let fee = if fees.is_empty() {
                0.0
            } else {
                fees[j.min(fees.len() - 1)]
            };
            (1.0, fee)
        })
        .collect();
    let set = EntitySet::two_stage((1.0, 0.0), &expert_costs)?;
    let mut preds = EntityPredictions::new(set.size());
    for ex in &full.examples {
        let mut row = Vec::with_capacity(set.size());
        row.push(OutputValue::Real(base.forward(&ex.features)?[0]));
        for expert in &experts {
            row.push(OutputValue::Real(expert.forward(&ex.features)?[0]));
        }
        preds.insert(ex.id, row)?;
    }
    Ok((set, preds))
}

/// Committee decision for one query.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Class(usize),
    Value(f64),
    /// Rules without a single point output (membership, best-member)
    /// return the committee's predictions.
    Committee(Vec<OutputValue>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub selection: TopKSet,
    pub decision: Decision,
    /// Total consultation fee of the selected committee.
    pub budget: f64,
}

/// Joint inference: ranks entities with the policy, picks the committee
/// size (fixed k, or argmax of the cardinality model with ties to the
/// smallest candidate), aggregates with the decision rule, and reports the
/// consultation budget.
pub fn infer(
    policy: &ScoreModel,
    choice: &CardinalityChoice,
    features: &[f64],
    predictions: &[OutputValue],
    set: &EntitySet,
    rule: DecisionRule,
) -> Result<Inference> {
    let scores = ScoreVector::new(policy.forward(features)?)?;
    if scores.len() != set.size() {
        return Err(Error::LengthMismatch {
            what: "policy scores",
            expected: set.size(),
            found: scores.len(),
        });
    }
    let k = choice.choose(features, set.size())?;
    let selection = top_k(&scores, k)?;
    let decision = match rule {
        DecisionRule::MajorityVote | DecisionRule::WeightedVote => {
            Decision::Class(aggregate_classify(&selection, predictions, &scores, rule)?)
        }
        DecisionRule::UniformAverage => {
            let mut mean = 0.0;
            for &j in selection.ranked() {
                mean += predictions[j - 1].as_real()?;
            }
            Decision::Value(mean / selection.k() as f64)
        }
        DecisionRule::WeightedAverage => {
            let weights = crate::aggregation::committee_weights(&selection, &scores)?;
            let mut mean = 0.0;
            for (slot, &j) in selection.ranked().iter().enumerate() {
                mean += weights[slot] * predictions[j - 1].as_real()?;
            }
            Decision::Value(mean)
        }
        DecisionRule::TopKMembership | DecisionRule::MinCost => Decision::Committee(
            selection
                .ranked()
                .iter()
                .map(|&j| predictions[j - 1])
                .collect(),
        ),
    };
    let fees = set.fees();
    let budget = selection.ranked().iter().map(|&j| fees[j - 1]).sum();
    Ok(Inference {
        selection,
        decision,
        budget,
    })
}
