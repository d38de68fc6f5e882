//! Seeded, self-contained property suites over the loss, oracle, and
//! cascade machinery, with counterexample reporting.
//!
//! Each check replays a randomized suite against an independent reference
//! (brute-force subset search, direct cascade simulation, the classical
//! top-1 loss definitions, finite differences) and reports pass/fail with
//! the first few counterexamples. A fault-injection hook deliberately
//! perturbs one bound so the checker itself can be shown to catch
//! violations.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    bayes_top_k, chow_rule, check_consistency_bound, gamma, gamma_inverse, ChowDecision,
    DiscreteConditional, FiniteDistribution, FinitePoint,
};
use crate::cascade::{
    adaptive_cascade_selection, cascade_scores, separating_example_check, CascadeSpec,
};
use crate::entities::{EntitySet, OutputValue, TaskPenalty};
use crate::error::Result;
use crate::losses::{
    deferral_surrogate, deferral_surrogate_grad, true_deferral_loss, upper_bound_rhs, CompSumParam,
};
use crate::models::{Activation, Architecture, ScoreModel};
use crate::selection::{top_k, ScoreVector};

/// Deliberate perturbations used to self-test the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaultInjection {
    #[default]
    None,
    /// Subtracts a margin from the upper-bound right-hand side.
    LowerUpperBound,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    pub counterexamples: Vec<String>,
}

impl CheckOutcome {
    fn new(check: &str) -> Self {
        Self {
            check: check.to_string(),
            passed: true,
            cases: 0,
            failures: 0,
            counterexamples: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.passed = false;
            self.failures += 1;
            if self.counterexamples.len() < 5 {
                self.counterexamples.push(describe());
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub all_passed: bool,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    /// When non-empty, only checks whose name contains one of these
    /// substrings run.
    pub only: Vec<String>,
    pub fault: FaultInjection,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            only: Vec::new(),
            fault: FaultInjection::None,
        }
    }
}

fn wanted(config: &VerifyConfig, name: &str) -> bool {
    config.only.is_empty() || config.only.iter().any(|f| name.contains(f.as_str()))
}

/// Upper bound on the true deferral loss. The sum-exponential member
/// dominates the selection indicator at every k; the logistic and MAE
/// members do so from k = 2.
fn check_upper_bound(rng: &mut ChaCha8Rng, fault: FaultInjection) -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("upper-bound");
    let fault_margin = match fault {
        FaultInjection::LowerUpperBound => 0.05,
        FaultInjection::None => 0.0,
    };
    for trial in 0..4_000 {
        let size = rng.random_range(2..=8usize);
        let costs: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
        let scores = ScoreVector::new((0..size).map(|_| rng.sample(StandardNormal)).collect())?;
        for (u, k_min) in [
            (CompSumParam::SUM_EXPONENTIAL, 1),
            (CompSumParam::new(0.5)?, 2),
            (CompSumParam::LOGISTIC, 2),
            (CompSumParam::MAE, 2),
        ] {
            for k in k_min..=size {
                let loss = true_deferral_loss(&costs, &top_k(&scores, k)?)?;
                let rhs = upper_bound_rhs(&scores, &costs, k, u)? - fault_margin;
                outcome.record(loss <= rhs + 1e-9, || {
                    format!(
                        "trial {trial}: u={} k={k} loss={loss} rhs={rhs} costs={costs:?}",
                        u.u()
                    )
                });
            }
        }
    }
    Ok(outcome)
}

fn brute_force_min_subset(mu: &[f64], k: usize) -> Vec<usize> {
    fn subsets(
        n: usize,
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
        mu: &[f64],
    ) {
        if cur.len() == k {
            let cost: f64 = cur.iter().map(|&j| mu[j - 1]).sum();
            match best {
                Some((b, _)) if cost >= *b - 1e-15 => {}
                _ => *best = Some((cost, cur.clone())),
            }
            return;
        }
        for j in start..=n {
            cur.push(j);
            subsets(n, k, j + 1, cur, best, mu);
            cur.pop();
        }
    }
    let mut best = None;
    subsets(mu.len(), k, 1, &mut Vec::new(), &mut best, mu);
    best.expect("k <= |A|").1
}

fn check_bayes_oracle(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("bayes-oracle");
    for trial in 0..400 {
        let size = rng.random_range(2..=8usize);
        let mu: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
        for k in 1..=size {
            let fast = bayes_top_k(&mu, k)?;
            let mut sorted = fast.ranked().to_vec();
            sorted.sort_unstable();
            let brute = brute_force_min_subset(&mu, k);
            outcome.record(sorted == brute, || {
                format!("trial {trial}: mu={mu:?} k={k} fast={sorted:?} brute={brute:?}")
            });
            if k < size {
                let next = bayes_top_k(&mu, k + 1)?;
                outcome.record(fast.ranked() == &next.ranked()[..k], || {
                    format!("trial {trial}: prefix break at k={k} for mu={mu:?}")
                });
            }
        }
    }
    Ok(outcome)
}

/// The k=1 deferral loss against the classical one-stage and two-stage
/// definitions, evaluated directly from their formulas.
fn check_top1_reduction(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("top1-reduction");
    for trial in 0..1_000 {
        // One-stage: labels with unit error weight and no fee, experts
        // with sampled costs.
        let n = rng.random_range(2..=4usize);
        let j_experts = rng.random_range(1..=3usize);
        let expert_costs: Vec<(f64, f64)> = (0..j_experts)
            .map(|_| (rng.random::<f64>(), 0.2 * rng.random::<f64>()))
            .collect();
        let set = EntitySet::one_stage(n, &expert_costs)?;
        let y = rng.random_range(1..=n);
        let expert_preds: Vec<usize> = (0..j_experts).map(|_| rng.random_range(1..=n)).collect();
        let mut costs = Vec::with_capacity(set.size());
        for c in 1..=n {
            costs.push(if c == y { 0.0 } else { 1.0 });
        }
        for (e, &(alpha, beta)) in expert_preds.iter().zip(&expert_costs).map(|(p, c)| (p, c)) {
            costs.push(alpha * if *e == y { 0.0 } else { 1.0 } + beta);
        }
        let scores = ScoreVector::new((0..set.size()).map(|_| rng.sample(StandardNormal)).collect())?;
        let selected = top_k(&scores, 1)?;
        let lib_loss = true_deferral_loss(&costs, &selected)?;
        // Classical definition: the argmax either predicts a label or
        // defers to one expert.
        let h = selected.ranked()[0];
        let classical = if h <= n {
            if h == y {
                0.0
            } else {
                1.0
            }
        } else {
            let (alpha, beta) = expert_costs[h - n - 1];
            alpha * if expert_preds[h - n - 1] == y { 0.0 } else { 1.0 } + beta
        };
        outcome.record(lib_loss == classical, || {
            format!("trial {trial}: one-stage k=1 loss {lib_loss} != classical {classical}")
        });

        // Two-stage: every entity carries a sampled cost; the classical
        // loss is the selected entity's cost.
        let size = rng.random_range(2..=5usize);
        let mu: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
        let scores = ScoreVector::new((0..size).map(|_| rng.sample(StandardNormal)).collect())?;
        let selected = top_k(&scores, 1)?;
        let lib_loss = true_deferral_loss(&mu, &selected)?;
        let classical = mu[selected.ranked()[0] - 1];
        outcome.record(lib_loss == classical, || {
            format!("trial {trial}: two-stage k=1 loss {lib_loss} != {classical}")
        });
    }
    Ok(outcome)
}

fn check_chow(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("chow-equivalence");
    for trial in 0..2_000 {
        let n = rng.random_range(2..=6usize);
        let mut posteriors: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = posteriors.iter().sum();
        posteriors.iter_mut().for_each(|p| *p /= total);
        let lambda = rng.random_range(0.01..0.99);
        let decision = chow_rule(&posteriors, lambda)?;
        let mut mu: Vec<f64> = posteriors.iter().map(|&p| 1.0 - p).collect();
        mu.push(lambda);
        let oracle = bayes_top_k(&mu, 1)?.ranked()[0];
        let expected = if oracle <= n {
            ChowDecision::Predict(oracle)
        } else {
            ChowDecision::Abstain
        };
        outcome.record(decision == expected, || {
            format!("trial {trial}: posteriors={posteriors:?} lambda={lambda} -> {decision:?} vs {expected:?}")
        });
    }
    Ok(outcome)
}

fn check_gamma() -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("gamma");
    for u in [
        CompSumParam::SUM_EXPONENTIAL,
        CompSumParam::LOGISTIC,
        CompSumParam::MAE,
    ] {
        let size = 6;
        outcome.record(gamma(u, 0.0, size)? == 0.0, || {
            format!("gamma_{}(0) != 0", u.u())
        });
        let mut prev = 0.0;
        for i in 1..1000 {
            let v = i as f64 / 1000.0;
            let g = gamma(u, v, size)?;
            outcome.record(g >= prev - 1e-15, || {
                format!("gamma_{} not monotone at v={v}", u.u())
            });
            prev = g;
            let back = gamma_inverse(u, g, size)?;
            outcome.record((back - v).abs() <= 1e-8, || {
                format!("gamma_{} inverse round trip: v={v} back={back}", u.u())
            });
        }
    }
    // The MAE transform is exactly v over the entity count.
    for size in 2..=8usize {
        let g = gamma(CompSumParam::MAE, 0.2, size)?;
        outcome.record((g - 0.2 / size as f64).abs() < 1e-15, || {
            format!("gamma_2(0.2, {size}) = {g}")
        });
    }
    Ok(outcome)
}

fn random_finite_distribution(rng: &mut ChaCha8Rng) -> Result<FiniteDistribution> {
    let n_points = rng.random_range(2..=10usize);
    let n_classes = rng.random_range(2..=5usize);
    let set = EntitySet::one_stage(n_classes, &[])?;
    let mut weights: Vec<f64> = (0..n_points).map(|_| rng.random::<f64>() + 0.02).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let points = weights
        .into_iter()
        .map(|weight| {
            let mut probs: Vec<f64> = (0..n_classes).map(|_| rng.random::<f64>() + 0.01).collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            Ok(FinitePoint {
                weight,
                conditional: DiscreteConditional::new(
                    (1..=n_classes).map(OutputValue::ClassId).collect(),
                    probs,
                )?,
                predictions: (1..=n_classes).map(OutputValue::ClassId).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FiniteDistribution {
        set,
        penalty: TaskPenalty::ZeroOne,
        points,
    })
}

fn check_consistency(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("consistency-bound");
    for trial in 0..100 {
        let dist = random_finite_distribution(rng)?;
        let policy: Vec<ScoreVector> = (0..dist.points.len())
            .map(|_| {
                ScoreVector::new(
                    (0..dist.set.size())
                        .map(|_| rng.random_range(-3.0..3.0))
                        .collect(),
                )
            })
            .collect::<Result<_>>()?;
        // MAE only binds the top-1 choice: its conditional minimizer is a
        // vertex, so the bound is checked at k = 1 for u = 2 and at every
        // k for the exponential and logistic members.
        for u in [
            CompSumParam::SUM_EXPONENTIAL,
            CompSumParam::LOGISTIC,
            CompSumParam::MAE,
        ] {
            let k_max = if u == CompSumParam::MAE {
                1
            } else {
                dist.set.size().min(3)
            };
            for k in 1..=k_max {
                let report = check_consistency_bound(&dist, &policy, k, u)?;
                outcome.record(report.holds, || {
                    format!(
                        "trial {trial}: u={} k={k} excess_true={} bound={}",
                        u.u(),
                        report.excess_true,
                        report.bound
                    )
                });
            }
        }
        // The oracle policy has zero excess true risk.
        let oracle = dist.oracle_policy()?;
        let report = check_consistency_bound(&dist, &oracle, 2.min(dist.set.size()), CompSumParam::LOGISTIC)?;
        outcome.record(report.excess_true.abs() < 1e-10 && report.holds, || {
            format!("trial {trial}: oracle policy excess {}", report.excess_true)
        });
    }
    Ok(outcome)
}

fn check_cascade(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("cascade");
    for trial in 0..1_000 {
        let size = rng.random_range(2..=8usize);
        let mut order: Vec<usize> = (1..=size).collect();
        for i in (1..size).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let k = rng.random_range(1..=size);
        let scores = cascade_scores(&order, k)?;
        let ranked = top_k(&scores, k)?;
        outcome.record(ranked.ranked() == &order[..k], || {
            format!("trial {trial}: order {order:?} k={k} ranked {:?}", ranked.ranked())
        });
    }
    for trial in 0..1_000 {
        let size = rng.random_range(2..=6usize);
        let mut order: Vec<usize> = (1..=size).collect();
        for i in (1..size).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut thresholds = Vec::with_capacity(size);
        let mut prev: f64 = 0.0;
        for stage in 0..size {
            let headroom = (1.0 - prev) / (size - stage + 1) as f64;
            prev += headroom * rng.random_range(0.1..0.95);
            thresholds.push(prev);
        }
        let confidence = vec![(0..size).map(|_| rng.random::<f64>()).collect::<Vec<f64>>()];
        let spec = CascadeSpec {
            order: order.clone(),
            thresholds: thresholds.clone(),
            confidence,
        };
        spec.validate()?;
        let (selection, k_hat) = adaptive_cascade_selection(&spec, 0, None)?;
        // Oracle: the straightforward evaluation loop.
        let mut simulated = Vec::new();
        for (stage, &entity) in order.iter().enumerate() {
            simulated.push(entity);
            if spec.confidence[0][entity - 1] >= thresholds[stage] {
                break;
            }
        }
        outcome.record(
            selection.ranked() == simulated.as_slice() && k_hat == simulated.len(),
            || format!("trial {trial}: adaptive {:?} vs simulated {simulated:?}", selection.ranked()),
        );
    }
    outcome.record(separating_example_check(), || {
        "separating example unexpectedly realizable by a fixed order".to_string()
    });
    Ok(outcome)
}

fn check_gradients(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("gradients");
    for trial in 0..100 {
        let size = rng.random_range(2..=6usize);
        let costs: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
        let scores: Vec<f64> = (0..size).map(|_| rng.sample(StandardNormal)).collect();
        let u = [
            CompSumParam::SUM_EXPONENTIAL,
            CompSumParam::LOGISTIC,
            CompSumParam::MAE,
        ][trial % 3];
        let sv = ScoreVector::new(scores.clone())?;
        let grad = deferral_surrogate_grad(&sv, &costs, u)?;
        let h = 1e-5;
        for l in 0..size {
            let mut plus = scores.clone();
            plus[l] += h;
            let mut minus = scores.clone();
            minus[l] -= h;
            let fd = (deferral_surrogate(&ScoreVector::new(plus)?, &costs, u)?
                - deferral_surrogate(&ScoreVector::new(minus)?, &costs, u)?)
                / (2.0 * h);
            let denom = grad[l].abs().max(fd.abs()).max(1.0);
            outcome.record((grad[l] - fd).abs() / denom <= 1e-4, || {
                format!("trial {trial}: u={} component {l}: {} vs {fd}", u.u(), grad[l])
            });
        }
        // Model-level chain rule on a small MLP.
        let arch = Architecture::Mlp {
            input_dim: 3,
            hidden_dim: 4,
            output_dim: size,
            activation: Activation::Tanh,
        };
        let model = ScoreModel::init(arch, rng.random());
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (raw, cache) = model.forward_cached(&x)?;
        let upstream = deferral_surrogate_grad(&ScoreVector::new(raw)?, &costs, u)?;
        let analytic = model.backward(&x, &cache, &upstream)?;
        for i in (0..model.params().len()).step_by(7) {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let lp = deferral_surrogate(&ScoreVector::new(plus.forward(&x)?)?, &costs, u)?;
            let lm = deferral_surrogate(&ScoreVector::new(minus.forward(&x)?)?, &costs, u)?;
            let fd = (lp - lm) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1.0);
            outcome.record((analytic[i] - fd).abs() / denom <= 1e-4, || {
                format!("trial {trial}: model param {i}: {} vs {fd}", analytic[i])
            });
        }
    }
    Ok(outcome)
}

fn check_convexity(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut outcome = CheckOutcome::new("convexity");
    for trial in 0..1_000 {
        let size = rng.random_range(2..=6usize);
        let costs: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
        let a: Vec<f64> = (0..size).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..size).map(|_| rng.sample(StandardNormal)).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let fa = deferral_surrogate(&ScoreVector::new(a.clone())?, &costs, CompSumParam::LOGISTIC)?;
        let fb = deferral_surrogate(&ScoreVector::new(b.clone())?, &costs, CompSumParam::LOGISTIC)?;
        let fm = deferral_surrogate(&ScoreVector::new(mid)?, &costs, CompSumParam::LOGISTIC)?;
        outcome.record(fm <= 0.5 * (fa + fb) + 1e-8, || {
            format!("trial {trial}: midpoint {fm} above chord {}", 0.5 * (fa + fb))
        });
    }
    Ok(outcome)
}

/// Runs the configured suites and aggregates their outcomes.
pub fn run(config: &VerifyConfig) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    if wanted(config, "upper-bound") {
        checks.push(check_upper_bound(&mut rng, config.fault)?);
    }
    if wanted(config, "bayes-oracle") {
        checks.push(check_bayes_oracle(&mut rng)?);
    }
    if wanted(config, "top1-reduction") {
        checks.push(check_top1_reduction(&mut rng)?);
    }
    if wanted(config, "chow-equivalence") {
        checks.push(check_chow(&mut rng)?);
    }
    if wanted(config, "gamma") {
        checks.push(check_gamma()?);
    }
    if wanted(config, "consistency-bound") {
        checks.push(check_consistency(&mut rng)?);
    }
    if wanted(config, "cascade") {
        checks.push(check_cascade(&mut rng)?);
    }
    if wanted(config, "gradients") {
        checks.push(check_gradients(&mut rng)?);
    }
    if wanted(config, "convexity") {
        checks.push(check_convexity(&mut rng)?);
    }
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed: config.seed,
        checks,
        all_passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_passes_everything() {
        let report = run(&VerifyConfig::default()).unwrap();
        for check in &report.checks {
            assert!(
                check.passed,
                "{} failed: {:?}",
                check.check, check.counterexamples
            );
        }
        assert!(report.all_passed);
        assert_eq!(report.checks.len(), 9);
    }

    #[test]
    fn injected_fault_is_caught_with_counterexample() {
        let config = VerifyConfig {
            seed: 7,
            only: vec!["upper-bound".into()],
            fault: FaultInjection::LowerUpperBound,
        };
        let report = run(&config).unwrap();
        assert!(!report.all_passed);
        let check = &report.checks[0];
        assert!(!check.passed);
        assert!(!check.counterexamples.is_empty());
    }

    #[test]
    fn check_filter_selects_a_single_suite() {
        let config = VerifyConfig {
            seed: 7,
            only: vec!["cascade".into()],
            fault: FaultInjection::None,
        };
        let report = run(&config).unwrap();
        assert_eq!(report.checks.len(), 1);
        assert_eq!(report.checks[0].check, "cascade");
        assert!(report.all_passed);
    }
}
