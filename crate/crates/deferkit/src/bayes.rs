//! Ground-truth machinery: expected entity costs, the cost-optimal top-k
//! selection, the reject-option special case, and the calibration
//! transforms used by the consistency-bound checker.
//!
//! The optimal top-k rule ranks entities by conditional expected cost
//! `mu_bar_j(x) = E[mu_j(x, Z) | X = x]` and keeps the k cheapest. On
//! finite synthetic distributions both the true risk and the surrogate
//! risk are exactly computable, and the reference infima are taken per
//! input over all score vectors, so the excess-risk comparison carries no
//! approximation error.

use serde::{Deserialize, Serialize};

use crate::entities::{entity_cost, EntityPredictions, EntitySet, OutputValue, TaskPenalty};
use crate::error::{Error, Result};
use crate::losses::{weighted_comp_sum, weighted_comp_sum_infimum, CompSumParam};
use crate::selection::{top_k, ScoreVector, TopKSet};

/// An exactly representable conditional `p(z | x)` on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConditional {
    support: Vec<OutputValue>,
    probs: Vec<f64>,
}

impl DiscreteConditional {
    pub fn new(support: Vec<OutputValue>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::LengthMismatch {
                what: "conditional probabilities",
                expected: support.len(),
                found: probs.len(),
            });
        }
        if support.is_empty() {
            return Err(Error::InvalidParameter("empty conditional support".into()));
        }
        let mut total = 0.0;
        for &p in &probs {
            if !(p >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "negative conditional probability {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "conditional probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { support, probs })
    }

    pub fn support(&self) -> &[OutputValue] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Expectation of `f(z)` under the conditional.
    pub fn expect(&self, mut f: impl FnMut(&OutputValue) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (z, &p) in self.support.iter().zip(&self.probs) {
            if p > 0.0 {
                total += p * f(z)?;
            }
        }
        Ok(total)
    }

    /// Seeded draw from the conditional (inverse CDF over the support
    /// order).
    pub fn sample(&self, uniform: f64) -> &OutputValue {
        let mut acc = 0.0;
        for (z, &p) in self.support.iter().zip(&self.probs) {
            acc += p;
            if uniform < acc {
                return z;
            }
        }
        self.support.last().expect("non-empty support")
    }
}

/// Conditional expected costs `mu_bar_j(x)` for every entity.
pub fn expected_costs(
    set: &EntitySet,
    preds: &EntityPredictions,
    conditional: &DiscreteConditional,
    example_id: u64,
    penalty: TaskPenalty,
) -> Result<Vec<f64>> {
    let row = preds.get(example_id)?;
    if row.len() != set.size() {
        return Err(Error::LengthMismatch {
            what: "prediction row",
            expected: set.size(),
            found: row.len(),
        });
    }
    set.entities()
        .iter()
        .zip(row)
        .map(|(e, pred)| conditional.expect(|z| entity_cost(e, pred, z, penalty)))
        .collect()
}

/// The k entities with the smallest expected cost, cheapest first, ties to
/// the smaller index. Equals the brute-force argmin over all size-k
/// subsets of the summed expected cost.
pub fn bayes_top_k(expected: &[f64], k: usize) -> Result<TopKSet> {
    // Ranking by ascending cost is ranking by descending negated cost, so
    // the selection tie rule carries over unchanged.
    let negated = ScoreVector::new(expected.iter().map(|&c| -c).collect())?;
    top_k(&negated, k)
}

/// Outcome of the reject-option rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChowDecision {
    Predict(usize),
    Abstain,
}

/// The reject-option rule: predict the most probable class when its error
/// probability is at most `lambda`, otherwise abstain. Equivalent to the
/// top-1 cost oracle over the label entities augmented with an abstain
/// entity of flat cost `lambda`.
pub fn chow_rule(class_posteriors: &[f64], lambda: f64) -> Result<ChowDecision> {
    if class_posteriors.is_empty() {
        return Err(Error::InvalidParameter("empty posterior vector".into()));
    }
    let total: f64 = class_posteriors.iter().sum();
    if (total - 1.0).abs() > 1e-9 || class_posteriors.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidParameter(
            "class posteriors must be a probability vector".into(),
        ));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "abstention cost lambda must be positive, got {lambda}"
        )));
    }
    let mut best = 0;
    for (j, &p) in class_posteriors.iter().enumerate() {
        if p > class_posteriors[best] {
            best = j;
        }
    }
    if 1.0 - class_posteriors[best] <= lambda {
        Ok(ChowDecision::Predict(best + 1))
    } else {
        Ok(ChowDecision::Abstain)
    }
}

/// Calibration transform `Gamma_u` for the supported family members:
/// exponential (u=0), logistic (u=1), and MAE (u=2, scaled by the entity
/// count). Domain `[0, 1)` for u in {0, 1}; non-negative reals for u=2.
pub fn gamma(u: CompSumParam, v: f64, cardinality: usize) -> Result<f64> {
    match u.u() {
        x if x == 0.0 => {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::DomainError {
                    what: "gamma_0",
                    value: v,
                });
            }
            Ok(1.0 - (1.0 - v * v).sqrt())
        }
        x if x == 1.0 => {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::DomainError {
                    what: "gamma_1",
                    value: v,
                });
            }
            if v == 0.0 {
                return Ok(0.0);
            }
            Ok(0.5 * (1.0 + v) * (1.0 + v).ln() + 0.5 * (1.0 - v) * (1.0 - v).ln())
        }
        x if x == 2.0 => {
            if !(v >= 0.0) {
                return Err(Error::DomainError {
                    what: "gamma_2",
                    value: v,
                });
            }
            Ok(v / cardinality as f64)
        }
        other => Err(Error::InvalidParameter(format!(
            "gamma implemented for u in {{0, 1, 2}}, got {other} \
             (see gamma_mid_u for the experimental (0,1) branch)"
        ))),
    }
}

/// The u-in-(0,1) transform, transcribed as stated with `v` in both the
/// scaling and exponent roles. The mixed symbols look like a typo upstream,
/// so this branch is exposed for inspection only and is never used by the
/// bound checker.
pub fn gamma_mid_u(u: CompSumParam, v: f64, cardinality: usize) -> Result<f64> {
    let x = u.u();
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma_mid_u expects u in (0,1), got {x}"
        )));
    }
    if !(0.0..1.0).contains(&v) {
        return Err(Error::DomainError {
            what: "gamma_mid_u",
            value: v,
        });
    }
    if v == 0.0 {
        return Ok(0.0);
    }
    let e = 1.0 / (1.0 - v);
    let inner = 0.5 * ((1.0 + v).powf(e) + (1.0 - v).powf(e));
    Ok((inner.powf(1.0 - v) - 1.0) / (v * (cardinality as f64).powf(v)))
}

fn gamma_sup(u: CompSumParam, cardinality: usize) -> f64 {
    // Limit of Gamma_u at v -> 1.
    match u.u() {
        x if x == 0.0 => 1.0,
        x if x == 1.0 => 2.0f64.ln(),
        _ => 1.0 / cardinality as f64,
    }
}

/// Monotone-bisection inverse of [`gamma`], exact to 1e-10 in v. Values at
/// or beyond the transform's range saturate to 1, which keeps the
/// composition `v -> k S Gamma_u^{-1}(v / S)` concave and non-decreasing.
pub fn gamma_inverse(u: CompSumParam, y: f64, cardinality: usize) -> Result<f64> {
    if !y.is_finite() || y < -1e-12 {
        return Err(Error::DomainError {
            what: "gamma_inverse",
            value: y,
        });
    }
    let y = y.max(0.0);
    if y == 0.0 {
        return Ok(0.0);
    }
    if y >= gamma_sup(u, cardinality) {
        return Ok(1.0);
    }
    let eval = |v: f64| -> f64 {
        if v >= 1.0 {
            gamma_sup(u, cardinality)
        } else {
            gamma(u, v, cardinality).expect("v in [0,1)")
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One input point of a finite synthetic distribution.
#[derive(Debug, Clone)]
pub struct FinitePoint {
    /// Marginal probability of this input.
    pub weight: f64,
    pub conditional: DiscreteConditional,
    /// Fixed entity predictions at this input.
    pub predictions: Vec<OutputValue>,
}

/// A fully enumerable distribution over (input, target) pairs, on which
/// deferral risks are exact sums.
#[derive(Debug, Clone)]
pub struct FiniteDistribution {
    pub set: EntitySet,
    pub penalty: TaskPenalty,
    pub points: Vec<FinitePoint>,
}

impl FiniteDistribution {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.points.iter().map(|p| p.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "input weights sum to {total}, expected 1"
            )));
        }
        for p in &self.points {
            if !(p.weight >= 0.0) {
                return Err(Error::InvalidParameter("negative input weight".into()));
            }
            if p.predictions.len() != self.set.size() {
                return Err(Error::LengthMismatch {
                    what: "finite-point predictions",
                    expected: self.set.size(),
                    found: p.predictions.len(),
                });
            }
        }
        Ok(())
    }

    /// Expected costs at every point.
    pub fn expected_cost_table(&self) -> Result<Vec<Vec<f64>>> {
        self.points
            .iter()
            .map(|p| {
                self.set
                    .entities()
                    .iter()
                    .zip(&p.predictions)
                    .map(|(e, pred)| {
                        p.conditional
                            .expect(|z| entity_cost(e, pred, z, self.penalty))
                    })
                    .collect()
            })
            .collect()
    }

    /// Per-point score vectors that realize the cost oracle: the negated
    /// expected costs.
    pub fn oracle_policy(&self) -> Result<Vec<ScoreVector>> {
        self.expected_cost_table()?
            .iter()
            .map(|mu| ScoreVector::new(mu.iter().map(|&c| -c).collect()))
            .collect()
    }
}

/// Outcome of one consistency-bound evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub k: usize,
    pub u: f64,
    pub s: f64,
    pub excess_true: f64,
    pub excess_surrogate: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Checks the excess-risk bound
/// `excess_true <= k * S * Gamma_u^{-1}(excess_surrogate / S)` for one
/// policy on a finite distribution. The reference infima are per-input
/// optima over all score vectors, so both minimizability gaps vanish and
/// the comparison is exact up to floating point.
pub fn check_consistency_bound(
    dist: &FiniteDistribution,
    policy: &[ScoreVector],
    k: usize,
    u: CompSumParam,
) -> Result<ConsistencyReport> {
    dist.validate()?;
    let size = dist.set.size();
    if policy.len() != dist.points.len() {
        return Err(Error::LengthMismatch {
            what: "policy score rows",
            expected: dist.points.len(),
            found: policy.len(),
        });
    }
    if k == 0 || k > size {
        return Err(Error::CardinalityOutOfRange { k, size });
    }
    let cost_table = dist.expected_cost_table()?;
    let mut true_risk = 0.0;
    let mut bayes_true_risk = 0.0;
    let mut surrogate_risk = 0.0;
    let mut optimal_surrogate_risk = 0.0;
    let mut mean_cost_mass = 0.0;
    for (point, (mu, scores)) in dist.points.iter().zip(cost_table.iter().zip(policy)) {
        if scores.len() != size {
            return Err(Error::LengthMismatch {
                what: "policy scores",
                expected: size,
                found: scores.len(),
            });
        }
        let w = point.weight;
        let selected = top_k(scores, k)?;
        true_risk += w * selected.ranked().iter().map(|&j| mu[j - 1]).sum::<f64>();
        let oracle = bayes_top_k(mu, k)?;
        bayes_true_risk += w * oracle.ranked().iter().map(|&j| mu[j - 1]).sum::<f64>();
        let total: f64 = mu.iter().sum();
        let tau: Vec<f64> = mu.iter().map(|&c| total - c).collect();
        surrogate_risk += w * weighted_comp_sum(scores, &tau, u)?;
        optimal_surrogate_risk += w * weighted_comp_sum_infimum(&tau, u)?;
        mean_cost_mass += w * total;
    }
    let s = (size as f64 - 1.0) * mean_cost_mass;
    let excess_true = true_risk - bayes_true_risk;
    let excess_surrogate = (surrogate_risk - optimal_surrogate_risk).max(0.0);
    let bound = if s > 0.0 {
        k as f64 * s * gamma_inverse(u, excess_surrogate / s, size)?
    } else {
        0.0
    };
    Ok(ConsistencyReport {
        k,
        u: u.u(),
        s,
        excess_true,
        excess_surrogate,
        bound,
        holds: excess_true <= bound + 1e-9,
    })
}
