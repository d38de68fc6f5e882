//! Decision rules over a selected committee and the budget metrics.
//!
//! Classification committees aggregate by membership, majority vote, or
//! score-weighted vote; regression committees by best member, uniform
//! average, or score-weighted average. Vote weights are a softmax over the
//! *selected* committee's scores (renormalized), which preserves the
//! argmax over committee members. Ties are always broken toward the
//! smallest class id, matching the global smallest-index rule.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::entities::{EntityPredictions, EntitySet, OutputValue};
use crate::error::{Error, Result};
use crate::models::ScoreModel;
use crate::selection::{top_k, ScoreVector, TopKSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Correct iff the target label appears among the committee's
    /// predictions.
    TopKMembership,
    MajorityVote,
    WeightedVote,
    /// Best committee member under the base regression loss.
    MinCost,
    UniformAverage,
    WeightedAverage,
}

impl DecisionRule {
    pub fn name(&self) -> &'static str {
        match self {
            DecisionRule::TopKMembership => "top_k_membership",
            DecisionRule::MajorityVote => "majority_vote",
            DecisionRule::WeightedVote => "weighted_vote",
            DecisionRule::MinCost => "min_cost",
            DecisionRule::UniformAverage => "uniform_average",
            DecisionRule::WeightedAverage => "weighted_average",
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(
            self,
            DecisionRule::TopKMembership | DecisionRule::MajorityVote | DecisionRule::WeightedVote
        )
    }

    /// Metric name reported by [`evaluate`].
    pub fn metric_name(&self) -> &'static str {
        match self {
            DecisionRule::TopKMembership => "acc_top_k",
            DecisionRule::MajorityVote => "acc_maj",
            DecisionRule::WeightedVote => "acc_w_vl",
            DecisionRule::MinCost => "rmse_min",
            DecisionRule::UniformAverage => "rmse_avg",
            DecisionRule::WeightedAverage => "rmse_w_avg",
        }
    }
}

/// Base per-prediction regression loss used inside the committee metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLoss {
    Squared,
    Absolute,
}

impl RegressionLoss {
    pub fn apply(&self, prediction: f64, target: f64) -> f64 {
        match self {
            RegressionLoss::Squared => (prediction - target) * (prediction - target),
            RegressionLoss::Absolute => (prediction - target).abs(),
        }
    }
}

/// Softmax of the policy scores restricted to the committee; sums to one.
pub fn committee_weights(selection: &TopKSet, scores: &ScoreVector) -> Result<Vec<f64>> {
    if selection.k() == 0 {
        return Err(Error::EmptySelection);
    }
    let selected: Vec<f64> = selection
        .ranked()
        .iter()
        .map(|&j| scores.score(j))
        .collect();
    let max = selected.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = selected.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

fn weighted_vote(
    selection: &TopKSet,
    predictions: &[OutputValue],
    weights: &[f64],
) -> Result<usize> {
    // Accumulate per-class weight; argmax with smallest-class-id ties.
    let mut tally: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for (slot, &j) in selection.ranked().iter().enumerate() {
        let class = predictions[j - 1].as_class()?;
        *tally.entry(class).or_insert(0.0) += weights[slot];
    }
    let mut best_class = 0;
    let mut best_weight = f64::NEG_INFINITY;
    for (&class, &weight) in &tally {
        if weight > best_weight {
            best_weight = weight;
            best_class = class;
        }
    }
    Ok(best_class)
}

/// Committee classification decision. `predictions` holds every entity's
/// prediction for this example, indexed 1-based like the selection.
pub fn aggregate_classify(
    selection: &TopKSet,
    predictions: &[OutputValue],
    scores: &ScoreVector,
    rule: DecisionRule,
) -> Result<usize> {
    if selection.k() == 0 {
        return Err(Error::EmptySelection);
    }
    match rule {
        DecisionRule::MajorityVote => {
            let uniform = vec![1.0; selection.k()];
            weighted_vote(selection, predictions, &uniform)
        }
        DecisionRule::WeightedVote => {
            let weights = committee_weights(selection, scores)?;
            weighted_vote(selection, predictions, &weights)
        }
        other => Err(Error::RuleMismatch {
            rule: other.name(),
            regime: "classification",
        }),
    }
}

/// Committee regression loss against the target under the chosen rule.
pub fn aggregate_regress(
    selection: &TopKSet,
    predictions: &[OutputValue],
    scores: &ScoreVector,
    target: f64,
    base: RegressionLoss,
    rule: DecisionRule,
) -> Result<f64> {
    if selection.k() == 0 {
        return Err(Error::EmptySelection);
    }
    match rule {
        DecisionRule::MinCost => {
            let mut best = f64::INFINITY;
            for &j in selection.ranked() {
                best = best.min(base.apply(predictions[j - 1].as_real()?, target));
            }
            Ok(best)
        }
        DecisionRule::UniformAverage => {
            let mut mean = 0.0;
            for &j in selection.ranked() {
                mean += predictions[j - 1].as_real()?;
            }
            mean /= selection.k() as f64;
            Ok(base.apply(mean, target))
        }
        DecisionRule::WeightedAverage => {
            let weights = committee_weights(selection, scores)?;
            let mut mean = 0.0;
            for (slot, &j) in selection.ranked().iter().enumerate() {
                mean += weights[slot] * predictions[j - 1].as_real()?;
            }
            Ok(base.apply(mean, target))
        }
        other => Err(Error::RuleMismatch {
            rule: other.name(),
            regime: "regression",
        }),
    }
}

/// The metric `d` of the cardinality loss: a per-example error in [0, 1]
/// for classification rules, a base-loss value for regression rules.
pub fn metric_d(
    selection: &TopKSet,
    predictions: &[OutputValue],
    target: &OutputValue,
    scores: &ScoreVector,
    rule: DecisionRule,
    base: RegressionLoss,
) -> Result<f64> {
    match rule {
        DecisionRule::TopKMembership => {
            let y = target.as_class()?;
            let mut hit = false;
            for &j in selection.ranked() {
                if predictions[j - 1].as_class()? == y {
                    hit = true;
                    break;
                }
            }
            Ok(if hit { 0.0 } else { 1.0 })
        }
        DecisionRule::MajorityVote | DecisionRule::WeightedVote => {
            let y = target.as_class()?;
            let vote = aggregate_classify(selection, predictions, scores, rule)?;
            Ok(if vote == y { 0.0 } else { 1.0 })
        }
        DecisionRule::MinCost | DecisionRule::UniformAverage | DecisionRule::WeightedAverage => {
            aggregate_regress(selection, predictions, scores, target.as_real()?, base, rule)
        }
    }
}

/// How the committee size is chosen at evaluation time.
pub enum CardinalityChoice<'a> {
    Fixed(usize),
    /// Argmax over the cardinality model's scores, ties to the smallest
    /// candidate.
    Adaptive(&'a ScoreModel),
}

impl CardinalityChoice<'_> {
    pub fn mode_name(&self) -> String {
        match self {
            CardinalityChoice::Fixed(k) => format!("fixed:{k}"),
            CardinalityChoice::Adaptive(_) => "adaptive".to_string(),
        }
    }

    pub fn choose(&self, features: &[f64], size: usize) -> Result<usize> {
        match self {
            CardinalityChoice::Fixed(k) => {
                if *k == 0 || *k > size {
                    return Err(Error::CardinalityOutOfRange { k: *k, size });
                }
                Ok(*k)
            }
            CardinalityChoice::Adaptive(model) => {
                let card_scores = ScoreVector::new(model.forward(features)?)?;
                if card_scores.len() != size {
                    return Err(Error::LengthMismatch {
                        what: "cardinality scores",
                        expected: size,
                        found: card_scores.len(),
                    });
                }
                Ok(top_k(&card_scores, 1)?.ranked()[0])
            }
        }
    }
}

/// Dataset-level evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rule: String,
    pub k_mode: String,
    pub k_bar: f64,
    pub budget_bar: f64,
    pub metric_name: String,
    pub value: f64,
    pub n_examples: usize,
    pub seed: u64,
}

/// Evaluates a trained policy (and optionally a cardinality model) on a
/// dataset: the rule's accuracy or RMSE, the expected budget
/// `beta_bar = E[sum of selected fees]`, and the expected committee size
/// `k_bar`.
pub fn evaluate(
    dataset: &Dataset,
    preds: &EntityPredictions,
    set: &EntitySet,
    policy: &ScoreModel,
    choice: &CardinalityChoice,
    rule: DecisionRule,
    base: RegressionLoss,
    seed: u64,
) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let fees = set.fees();
    let mut d_sum = 0.0;
    let mut k_sum = 0.0;
    let mut budget_sum = 0.0;
    for example in &dataset.examples {
        let scores = ScoreVector::new(policy.forward(&example.features)?)?;
        if scores.len() != set.size() {
            return Err(Error::LengthMismatch {
                what: "policy scores",
                expected: set.size(),
                found: scores.len(),
            });
        }
        let k = choice.choose(&example.features, set.size())?;
        let selection = top_k(&scores, k)?;
        let row = preds.get(example.id)?;
        d_sum += metric_d(&selection, row, &example.target, &scores, rule, base)?;
        k_sum += selection.k() as f64;
        budget_sum += selection.ranked().iter().map(|&j| fees[j - 1]).sum::<f64>();
    }
    let n = dataset.len() as f64;
    let value = if rule.is_classification() {
        1.0 - d_sum / n
    } else {
        match base {
            RegressionLoss::Squared => (d_sum / n).sqrt(),
            RegressionLoss::Absolute => d_sum / n,
        }
    };
    Ok(MetricsReport {
        rule: rule.name().to_string(),
        k_mode: choice.mode_name(),
        k_bar: k_sum / n,
        budget_bar: budget_sum / n,
        metric_name: rule.metric_name().to_string(),
        value,
        n_examples: dataset.len(),
        seed,
    })
}
