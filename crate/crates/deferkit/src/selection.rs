//! Score-induced rankings and top-k selection sets.
//!
//! A policy assigns a score to every entity; the top-k selection set keeps
//! the k highest-scoring entities in non-increasing score order. Ties are
//! broken by ascending entity index, and the same rule is applied
//! everywhere scores or expected costs are ranked, so learned selections
//! and oracle selections stay directly comparable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite per-entity scores `pi(x, .)`. NaN and infinities are rejected at
/// construction; silently sorting NaN would be platform-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        for (i, &s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFiniteScore {
                    index: i + 1,
                    value: s,
                });
            }
        }
        Ok(Self(scores))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Score of the entity with 1-based index `j`.
    pub fn score(&self, j: usize) -> f64 {
        self.0[j - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The ranked top-k selection set: k distinct 1-based entity indices in
/// non-increasing score order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopKSet {
    ranked: Vec<usize>,
}

impl TopKSet {
    pub fn k(&self) -> usize {
        self.ranked.len()
    }

    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    pub fn contains(&self, index: usize) -> bool {
        self.ranked.contains(&index)
    }

    /// The first `k` entries as a new selection. Selections produced by
    /// one score vector are prefix-nested across k.
    pub fn prefix(&self, k: usize) -> Result<TopKSet> {
        if k == 0 || k > self.ranked.len() {
            return Err(Error::CardinalityOutOfRange {
                k,
                size: self.ranked.len(),
            });
        }
        Ok(TopKSet {
            ranked: self.ranked[..k].to_vec(),
        })
    }

    /// Unchecked constructor for ranked index lists built elsewhere
    /// (oracle rankings, cascade prefixes). Indices must be 1-based and
    /// distinct.
    pub fn from_ranked(ranked: Vec<usize>) -> Result<TopKSet> {
        if ranked.is_empty() {
            return Err(Error::EmptySelection);
        }
        let mut seen = ranked.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != ranked.len() || seen[0] == 0 {
            return Err(Error::InvalidParameter(
                "ranked indices must be distinct and 1-based".into(),
            ));
        }
        Ok(TopKSet { ranked })
    }

    /// Same membership irrespective of rank order.
    pub fn same_set(&self, other: &TopKSet) -> bool {
        if self.ranked.len() != other.ranked.len() {
            return false;
        }
        let mut a = self.ranked.clone();
        let mut b = other.ranked.clone();
        a.sort_unstable();
        b.sort_unstable();
        a == b
    }
}

/// Indices of the k largest scores, ties broken toward the smaller entity
/// index. `top_k(s, |A|)` ranks every entity, and every smaller k is a
/// prefix of that full ranking.
pub fn top_k(scores: &ScoreVector, k: usize) -> Result<TopKSet> {
    let size = scores.len();
    if k == 0 || k > size {
        return Err(Error::CardinalityOutOfRange { k, size });
    }
    let mut order: Vec<usize> = (1..=size).collect();
    order.sort_by(|&a, &b| {
        scores
            .score(b)
            .partial_cmp(&scores.score(a))
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(TopKSet { ranked: order })
}

/// Binary membership vector: component j is 1 iff entity j is selected.
pub fn membership_vector(set: &TopKSet, size: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; size];
    for &j in set.ranked() {
        if j > size {
            return Err(Error::CardinalityOutOfRange { k: j, size });
        }
        v[j - 1] = 1.0;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(scores: &[f64]) -> ScoreVector {
        ScoreVector::new(scores.to_vec()).unwrap()
    }

    #[test]
    fn top_1_is_argmax() {
        assert_eq!(top_k(&sv(&[0.1, 0.9, 0.5]), 1).unwrap().ranked(), &[2]);
    }

    #[test]
    fn top_2_sorts_descending() {
        assert_eq!(top_k(&sv(&[0.1, 0.9, 0.5]), 2).unwrap().ranked(), &[2, 3]);
    }

    #[test]
    fn ties_break_to_smaller_index() {
        assert_eq!(top_k(&sv(&[0.7, 0.7, 0.2]), 2).unwrap().ranked(), &[1, 2]);
    }

    #[test]
    fn k_out_of_range_errors() {
        assert!(top_k(&sv(&[0.0, 1.0]), 0).is_err());
        assert!(top_k(&sv(&[0.0, 1.0]), 3).is_err());
    }

    #[test]
    fn nan_rejected_at_construction() {
        assert!(ScoreVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(ScoreVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn membership_examples() {
        let s = TopKSet::from_ranked(vec![3, 1]).unwrap();
        assert_eq!(membership_vector(&s, 4).unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
        let s = TopKSet::from_ranked(vec![2]).unwrap();
        assert_eq!(membership_vector(&s, 2).unwrap(), vec![0.0, 1.0]);
        let s = TopKSet::from_ranked(vec![1, 2, 3]).unwrap();
        assert_eq!(membership_vector(&s, 3).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn prefix_consistency(scores in proptest::collection::vec(-1e3f64..1e3, 1..12)) {
            let s = sv(&scores);
            let full = top_k(&s, s.len()).unwrap();
            for k in 1..=s.len() {
                let sub = top_k(&s, k).unwrap();
                prop_assert_eq!(sub.ranked(), &full.ranked()[..k]);
            }
        }

        #[test]
        fn full_ranking_is_a_permutation(scores in proptest::collection::vec(-1e3f64..1e3, 1..12)) {
            let s = sv(&scores);
            let mut ranked = top_k(&s, s.len()).unwrap().ranked().to_vec();
            ranked.sort_unstable();
            let expect: Vec<usize> = (1..=s.len()).collect();
            prop_assert_eq!(ranked, expect);
        }

        #[test]
        fn constant_shift_leaves_selection_unchanged(
            scores in proptest::collection::vec(-1e3f64..1e3, 2..10),
            shift in -1e3f64..1e3,
            k in 1usize..8,
        ) {
            prop_assume!(k <= scores.len());
            let base = top_k(&sv(&scores), k).unwrap();
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let moved = top_k(&sv(&shifted), k).unwrap();
            prop_assert_eq!(base.ranked(), moved.ranked());
        }

        #[test]
        fn permutation_equivariance_on_distinct_scores(
            seed in proptest::collection::vec(0.001f64..1.0, 2..10),
            k in 1usize..8,
            rot in 0usize..8,
        ) {
            // Build strictly distinct scores so order is unambiguous.
            let mut scores = vec![0.0; seed.len()];
            let mut acc = 0.0;
            for (i, gap) in seed.iter().enumerate() {
                acc += gap;
                scores[i] = acc;
            }
            prop_assume!(k <= scores.len());
            let n = scores.len();
            let rot = rot % n;
            // sigma maps old position i to new position (i + rot) mod n.
            let mut permuted = vec![0.0; n];
            for i in 0..n {
                permuted[(i + rot) % n] = scores[i];
            }
            let base = top_k(&sv(&scores), k).unwrap();
            let moved = top_k(&sv(&permuted), k).unwrap();
            let mapped: Vec<usize> = base
                .ranked()
                .iter()
                .map(|&j| (j - 1 + rot) % n + 1)
                .collect();
            prop_assert_eq!(moved.ranked(), mapped.as_slice());
        }
    }
}
