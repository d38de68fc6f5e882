//! Embeds classical model cascades as top-k policies.
//!
//! A cascade evaluates entities in a fixed order until a confidence
//! threshold fires. Its size-k allocation is always the length-k prefix of
//! that order, which a score vector can reproduce exactly: prefix members
//! get scores in (1, 2] descending along the order, non-members get
//! negative scores, so the top-k selection recovers the prefix in order.
//! The converse fails — a score policy can select non-prefix sets on
//! different inputs — which makes the cascade class a strict subset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{top_k, ScoreVector, TopKSet};

/// A fixed-order, threshold-stopped cascade over an entity set, plus the
/// per-example confidence table (rows are examples, columns entities).
/// Confidence values are data inputs, like expert predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CascadeSpec {
    /// Evaluation order: a permutation of 1..=|A|.
    pub order: Vec<usize>,
    /// Strictly increasing thresholds in (0, 1), one per stage.
    pub thresholds: Vec<f64>,
    /// confidence[example][entity - 1] in [0, 1].
    pub confidence: Vec<Vec<f64>>,
}

impl CascadeSpec {
    pub fn validate(&self) -> Result<()> {
        let size = self.order.len();
        let mut seen = self.order.clone();
        seen.sort_unstable();
        if seen != (1..=size).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter(
                "cascade order must be a permutation of 1..=|A|".into(),
            ));
        }
        if self.thresholds.len() != size {
            return Err(Error::LengthMismatch {
                what: "cascade thresholds",
                expected: size,
                found: self.thresholds.len(),
            });
        }
        let mut prev = 0.0;
        for &t in &self.thresholds {
            if !(t > prev && t < 1.0) {
                return Err(Error::InvalidParameter(
                    "thresholds must be strictly increasing within (0, 1)".into(),
                ));
            }
            prev = t;
        }
        for row in &self.confidence {
            if row.len() != size {
                return Err(Error::LengthMismatch {
                    what: "confidence row",
                    expected: size,
                    found: row.len(),
                });
            }
            if row.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                return Err(Error::InvalidParameter(
                    "confidence values must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.order.len()
    }
}

/// Scores whose top-k selection is exactly the length-k prefix of `order`:
/// member at prefix rank r scores `2 - r/(k+1)`; the complement, ranked by
/// the same order, scores `-r'/(|A|+1)`.
pub fn cascade_scores(order: &[usize], k: usize) -> Result<ScoreVector> {
    let size = order.len();
    if k == 0 || k > size {
        return Err(Error::CardinalityOutOfRange { k, size });
    }
    let mut scores = vec![0.0; size];
    for (pos, &entity) in order.iter().enumerate() {
        scores[entity - 1] = if pos < k {
            2.0 - (pos + 1) as f64 / (k + 1) as f64
        } else {
            -((pos - k + 1) as f64) / (size + 1) as f64
        };
    }
    ScoreVector::new(scores)
}

/// Stage at which the cascade stops for one example: the first stage whose
/// confidence clears its threshold, or the final stage as fallback.
pub fn stop_stage(order: &[usize], thresholds: &[f64], confidence_row: &[f64]) -> usize {
    for (stage, &entity) in order.iter().enumerate() {
        if confidence_row[entity - 1] >= thresholds[stage] {
            return stage + 1;
        }
    }
    order.len()
}

/// The adaptive cascade as a (policy, cardinality) pair evaluated on one
/// example: chooses the stop stage, builds the prefix-realizing scores at
/// that cardinality, and returns the induced selection. A constant-argmax
/// cardinality at the stop stage plus these scores reproduces the cascade
/// allocation exactly.
pub fn adaptive_cascade_selection(
    spec: &CascadeSpec,
    example: usize,
    stop_rule: Option<&dyn Fn(&[f64]) -> usize>,
) -> Result<(TopKSet, usize)> {
    let row = spec
        .confidence
        .get(example)
        .ok_or(Error::MissingExample(example as u64))?;
    let k_hat = match stop_rule {
        Some(rule) => rule(row),
        None => stop_stage(&spec.order, &spec.thresholds, row),
    };
    if k_hat == 0 || k_hat > spec.size() {
        return Err(Error::CardinalityOutOfRange {
            k: k_hat,
            size: spec.size(),
        });
    }
    let scores = cascade_scores(&spec.order, k_hat)?;
    Ok((top_k(&scores, k_hat)?, k_hat))
}

/// Whether a single fixed order realizes all the given selection sets as
/// prefixes. Enumerates every permutation, so only meant for small |A|.
pub fn prefix_realizable(target_sets: &[Vec<usize>], size: usize) -> bool {
    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let mut orders = Vec::new();
    permutations(&mut (1..=size).collect(), 0, &mut orders);
    'order: for order in &orders {
        for set in target_sets {
            let prefix: std::collections::BTreeSet<usize> =
                order[..set.len()].iter().copied().collect();
            let wanted: std::collections::BTreeSet<usize> = set.iter().copied().collect();
            if prefix != wanted {
                continue 'order;
            }
        }
        return true;
    }
    false
}

/// The two-input separating instance: top-2 selections {1, 3} and {1, 2}
/// cannot both be prefixes of one fixed order, so no cascade realizes this
/// policy. Returns true when the separation holds.
pub fn separating_example_check() -> bool {
    !prefix_realizable(&[vec![1, 3], vec![1, 2]], 3)
}
