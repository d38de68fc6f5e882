//! Loss functions: the top-k true deferral loss, the comp-sum surrogate
//! family, the k-independent deferral surrogate, and the cardinality-aware
//! loss with its surrogate.
//!
//! # The surrogate family
//!
//! The comp-sum losses are built from an outer function applied to the
//! score margins,
//!
//! ```text
//! phi_u(s, j) = Psi_u( sum_{j'} exp(s_{j'} - s_j) - 1 )
//! Psi_1(v) = ln(1 + v)                      (logistic)
//! Psi_u(v) = [(1 + v)^(1-u) - 1] / (1 - u)  (u != 1; u=0 sum-exponential, u=2 MAE)
//! ```
//!
//! Everything is evaluated through a max-shifted log-sum-exp: with
//! `t_j = lse(s) - s_j >= 0` we have `1 + v = exp(t_j)`, so
//! `phi_1 = t_j` and `phi_u = expm1((1-u) t_j) / (1-u)`. This avoids
//! overflow for confidently wrong scores.
//!
//! # The deferral surrogate is independent of k
//!
//! The deferral surrogate weights each entity's comp-sum term by the total
//! cost of all *other* entities, `tau_j = sum_{i != j} mu_i`. The
//! cardinality k never appears, so one trained policy serves every k.

use serde::{Deserialize, Serialize};

use crate::aggregation::{metric_d, DecisionRule, RegressionLoss};
use crate::entities::OutputValue;
use crate::error::{Error, Result};
use crate::selection::{ScoreVector, TopKSet};

/// Selects the outer function `Psi_u` of the comp-sum family. Supported
/// values: `u = 0` (sum-exponential), `u in (0,1)` (generalized
/// cross-entropy), `u = 1` (logistic), `u = 2` (MAE).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompSumParam(f64);

impl CompSumParam {
    pub const SUM_EXPONENTIAL: CompSumParam = CompSumParam(0.0);
    pub const LOGISTIC: CompSumParam = CompSumParam(1.0);
    pub const MAE: CompSumParam = CompSumParam(2.0);

    pub fn new(u: f64) -> Result<Self> {
        if !u.is_finite() || u < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "comp-sum parameter u must be a finite non-negative real, got {u}"
            )));
        }
        Ok(Self(u))
    }

    pub fn u(&self) -> f64 {
        self.0
    }
}

/// Max-shifted log-sum-exp.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

fn phi_from_margin(t: f64, u: f64) -> f64 {
    // t = lse(s) - s_j >= 0 up to rounding.
    let t = t.max(0.0);
    if u == 1.0 {
        t
    } else {
        ((1.0 - u) * t).exp_m1() / (1.0 - u)
    }
}

/// One comp-sum term `phi_u(scores, j)` for the 1-based entity index `j`.
pub fn comp_sum_phi(scores: &ScoreVector, j: usize, u: CompSumParam) -> Result<f64> {
    if j == 0 || j > scores.len() {
        return Err(Error::CardinalityOutOfRange {
            k: j,
            size: scores.len(),
        });
    }
    let lse = log_sum_exp(scores.as_slice());
    Ok(phi_from_margin(lse - scores.score(j), u.u()))
}

/// All comp-sum terms in one pass.
pub fn comp_sum_phi_all(scores: &ScoreVector, u: CompSumParam) -> Vec<f64> {
    let lse = log_sum_exp(scores.as_slice());
    scores
        .as_slice()
        .iter()
        .map(|&s| phi_from_margin(lse - s, u.u()))
        .collect()
}

/// `sum_j weights[j] * phi_u(scores, j)` with non-negative weights.
pub fn weighted_comp_sum(scores: &ScoreVector, weights: &[f64], u: CompSumParam) -> Result<f64> {
    if weights.len() != scores.len() {
        return Err(Error::LengthMismatch {
            what: "comp-sum weights",
            expected: scores.len(),
            found: weights.len(),
        });
    }
    let phis = comp_sum_phi_all(scores, u);
    Ok(weights.iter().zip(&phis).map(|(w, p)| w * p).sum())
}

/// Analytic gradient of [`weighted_comp_sum`] with respect to the scores.
///
/// With `p = softmax(s)` and `a_j = exp((1-u) t_j)`:
/// `d/ds_l = p_l * sum_j w_j a_j - w_l a_l`.
pub fn weighted_comp_sum_grad(
    scores: &ScoreVector,
    weights: &[f64],
    u: CompSumParam,
) -> Result<Vec<f64>> {
    if weights.len() != scores.len() {
        return Err(Error::LengthMismatch {
            what: "comp-sum weights",
            expected: scores.len(),
            found: weights.len(),
        });
    }
    let u = u.u();
    let lse = log_sum_exp(scores.as_slice());
    let n = scores.len();
    let mut softmax = vec![0.0; n];
    let mut outer = vec![0.0; n];
    let mut weighted_outer = 0.0;
    for (l, &s) in scores.as_slice().iter().enumerate() {
        let t = (lse - s).max(0.0);
        softmax[l] = (s - lse).exp();
        outer[l] = if u == 1.0 { 1.0 } else { ((1.0 - u) * t).exp() };
        weighted_outer += weights[l] * outer[l];
    }
    Ok((0..n)
        .map(|l| softmax[l] * weighted_outer - weights[l] * outer[l])
        .collect())
}

/// Exact infimum of `sum_j w_j * phi_u(s, j)` over all score vectors, the
/// per-input reference value used by the consistency-bound checker.
///
/// Writing `q = softmax(s)`, the objective is `sum_j w_j Psi_u(1/q_j - 1)`,
/// minimized on the simplex at `q_j` proportional to `w_j^(1/(2-u))` for
/// `u < 2`, and at the vertex of the largest weight for `u = 2` (value
/// `sum w - max w`). Verified against a numerical minimizer in the tests.
pub fn weighted_comp_sum_infimum(weights: &[f64], u: CompSumParam) -> Result<f64> {
    let u = u.u();
    if u > 2.0 {
        return Err(Error::InvalidParameter(format!(
            "conditional infimum implemented for u <= 2, got {u}"
        )));
    }
    for &w in weights {
        if !(w >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "comp-sum weights must be non-negative, got {w}"
            )));
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    if u == 2.0 {
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok(total - max);
    }
    let exponent = 1.0 / (2.0 - u);
    let mass: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| w.powf(exponent))
        .sum();
    let mut value = 0.0;
    for &w in weights.iter().filter(|&&w| w > 0.0) {
        let q = w.powf(exponent) / mass;
        // phi at margin t = -ln q.
        value += w * phi_from_margin(-q.ln(), u);
    }
    Ok(value)
}

/// Total cost of the selected committee:
/// `sum_j mu_j * 1{j in selection}`.
pub fn true_deferral_loss(costs: &[f64], selection: &TopKSet) -> Result<f64> {
    if selection.k() > costs.len() {
        return Err(Error::LengthMismatch {
            what: "cost vector",
            expected: selection.k(),
            found: costs.len(),
        });
    }
    let mut total = 0.0;
    for &j in selection.ranked() {
        if j > costs.len() {
            return Err(Error::CardinalityOutOfRange {
                k: j,
                size: costs.len(),
            });
        }
        total += costs[j - 1];
    }
    Ok(total)
}

/// Complement weights `tau_j = sum_{i != j} mu_i`, computed as
/// `total - mu_j`.
pub fn complement_weights(costs: &[f64]) -> Vec<f64> {
    let total: f64 = costs.iter().sum();
    costs.iter().map(|&c| total - c).collect()
}

/// The k-independent deferral surrogate
/// `sum_j (sum_{i != j} mu_i) * phi_u(scores, j)`.
pub fn deferral_surrogate(scores: &ScoreVector, costs: &[f64], u: CompSumParam) -> Result<f64> {
    weighted_comp_sum(scores, &complement_weights(costs), u)
}

/// Gradient of [`deferral_surrogate`] with respect to the scores.
pub fn deferral_surrogate_grad(
    scores: &ScoreVector,
    costs: &[f64],
    u: CompSumParam,
) -> Result<Vec<f64>> {
    weighted_comp_sum_grad(scores, &complement_weights(costs), u)
}

/// Right-hand side of the deferral-loss upper bound:
/// `deferral_surrogate - (|A| - 1 - k) * sum_j mu_j`. Used by the property
/// suites.
pub fn upper_bound_rhs(
    scores: &ScoreVector,
    costs: &[f64],
    k: usize,
    u: CompSumParam,
) -> Result<f64> {
    if k == 0 || k > costs.len() {
        return Err(Error::CardinalityOutOfRange {
            k,
            size: costs.len(),
        });
    }
    let total: f64 = costs.iter().sum();
    let slack = (costs.len() as f64 - 1.0 - k as f64) * total;
    Ok(deferral_surrogate(scores, costs, u)? - slack)
}

/// Non-decreasing transform applied to the accumulated consultation fees
/// inside the cardinality loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetTransform {
    Identity,
    Sqrt,
    Log1p,
}

impl BudgetTransform {
    pub fn apply(&self, fees: f64) -> f64 {
        match self {
            BudgetTransform::Identity => fees,
            BudgetTransform::Sqrt => fees.sqrt(),
            BudgetTransform::Log1p => fees.ln_1p(),
        }
    }
}

/// Configuration of the cardinality-aware loss: the aggregation metric d,
/// the fee regularizer lambda, and the fee transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardinalityLossConfig {
    pub metric: DecisionRule,
    pub base_loss: RegressionLoss,
    pub lambda: f64,
    pub xi: BudgetTransform,
}

impl CardinalityLossConfig {
    pub fn new(
        metric: DecisionRule,
        base_loss: RegressionLoss,
        lambda: f64,
        xi: BudgetTransform,
    ) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be a finite non-negative real, got {lambda}"
            )));
        }
        // xi must start non-negative and be non-decreasing; checked on a
        // sampled grid.
        let cfg = Self {
            metric,
            base_loss,
            lambda,
            xi,
        };
        let mut prev = xi.apply(0.0);
        if !(prev >= 0.0) {
            return Err(Error::InvalidParameter("xi(0) must be non-negative".into()));
        }
        for i in 1..=100 {
            let value = xi.apply(i as f64 * 0.1);
            if value + 1e-12 < prev {
                return Err(Error::InvalidParameter(
                    "xi must be non-decreasing".into(),
                ));
            }
            prev = value;
        }
        Ok(cfg)
    }
}

/// One example's view for committee metrics: each entity's prediction, the
/// realized target, and the policy scores (used by weighted rules).
#[derive(Debug, Clone, Copy)]
pub struct CommitteeExample<'a> {
    pub predictions: &'a [OutputValue],
    pub target: &'a OutputValue,
    pub policy_scores: &'a ScoreVector,
}

/// Cardinality-aware loss at committee size `k_hat`:
/// `d(prefix) + lambda * xi(sum of the prefix fees)`.
pub fn cardinality_true_loss(
    full_ranking: &TopKSet,
    k_hat: usize,
    example: &CommitteeExample,
    config: &CardinalityLossConfig,
    fees: &[f64],
) -> Result<f64> {
    let prefix = full_ranking.prefix(k_hat)?;
    let d = metric_d(
        &prefix,
        example.predictions,
        example.target,
        example.policy_scores,
        config.metric,
        config.base_loss,
    )?;
    let mut fee_sum = 0.0;
    for &j in prefix.ranked() {
        if j > fees.len() {
            return Err(Error::CardinalityOutOfRange {
                k: j,
                size: fees.len(),
            });
        }
        fee_sum += fees[j - 1];
    }
    Ok(d + config.lambda * config.xi.apply(fee_sum))
}

/// Per-example surrogate weights `1 - normalized(l_card)` over the
/// candidate cardinalities. The normalization is a per-example min-max; if
/// every candidate ties, the weights degenerate to all ones (flagged to
/// the log) so the surrogate stays finite and label-agnostic.
pub fn cardinality_weights(losses: &[f64]) -> (Vec<f64>, bool) {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max - min > 0.0) {
        log::warn!("all candidate cardinalities tie (loss {min}); using uniform weights");
        return (vec![1.0; losses.len()], true);
    }
    let span = max - min;
    (losses.iter().map(|&l| 1.0 - (l - min) / span).collect(), false)
}

/// Cardinality losses for every candidate `v in 1..=|A|`.
pub fn cardinality_loss_profile(
    full_ranking: &TopKSet,
    example: &CommitteeExample,
    config: &CardinalityLossConfig,
    fees: &[f64],
) -> Result<Vec<f64>> {
    (1..=full_ranking.k())
        .map(|v| cardinality_true_loss(full_ranking, v, example, config, fees))
        .collect()
}

/// The cardinality surrogate
/// `sum_v (1 - normalized l_card(v)) * phi_u(cardinality_scores, v)`.
pub fn cardinality_surrogate(
    full_ranking: &TopKSet,
    cardinality_scores: &ScoreVector,
    example: &CommitteeExample,
    config: &CardinalityLossConfig,
    fees: &[f64],
    u: CompSumParam,
) -> Result<f64> {
    if cardinality_scores.len() != full_ranking.k() {
        return Err(Error::LengthMismatch {
            what: "cardinality scores",
            expected: full_ranking.k(),
            found: cardinality_scores.len(),
        });
    }
    let losses = cardinality_loss_profile(full_ranking, example, config, fees)?;
    let (weights, _) = cardinality_weights(&losses);
    weighted_comp_sum(cardinality_scores, &weights, u)
}
