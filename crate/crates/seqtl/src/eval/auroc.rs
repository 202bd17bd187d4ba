use super::{EvalError, ScoredSet};

/// Area under the ROC curve by the rank statistic: with `P` positives and
/// `N` negatives, `(sum of positive ranks - P(P+1)/2) / (P*N)`, where tied
/// scores share their average rank. Equals the probability that a random
/// positive outscores a random negative, ties counting one half.
pub fn auroc(set: &ScoredSet) -> Result<f64, EvalError> {
    let positives = set.pairs.iter().filter(|(_, y)| *y == 1).count();
    let negatives = set.pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::UndefinedMetric {
            task: set.task.clone(),
        });
    }
    if set.pairs.iter().any(|(s, _)| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore {
            task: set.task.clone(),
        });
    }

    let mut order: Vec<usize> = (0..set.pairs.len()).collect();
    order.sort_by(|&a, &b| set.pairs[a].0.total_cmp(&set.pairs[b].0));

    // Average ranks over tie groups; ranks are 1-based.
    let mut positive_rank_sum = 0.0f64;
    let mut start = 0usize;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len()
            && set.pairs[order[end + 1]].0 == set.pairs[order[start]].0
        {
            end += 1;
        }
        let rank = (start + 1 + end + 1) as f64 / 2.0;
        for &idx in &order[start..=end] {
            if set.pairs[idx].1 == 1 {
                positive_rank_sum += rank;
            }
        }
        start = end + 1;
    }

    let p = positives as f64;
    let n = negatives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Positive-count-weighted mean of per-task AUROCs:
/// `sum_k w_k AUROC_k / sum_k w_k` with `w_k` = number of positives of
/// task `k`.
pub fn weighted_auroc(sets: &[ScoredSet]) -> Result<f64, EvalError> {
    if sets.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let mut weighted_sum = 0.0f64;
    let mut weight_total = 0.0f64;
    for set in sets {
        let value = auroc(set)?;
        let weight = set.pairs.iter().filter(|(_, y)| *y == 1).count() as f64;
        weighted_sum += weight * value;
        weight_total += weight;
    }
    Ok(weighted_sum / weight_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet {
        ScoredSet {
            task: "t".into(),
            pairs: scores.iter().copied().zip(labels.iter().copied()).collect(),
        }
    }

    /// O(P*N) pair-counting oracle: wins count 1, ties count one half.
    pub(crate) fn pair_count_auroc(set: &ScoredSet) -> f64 {
        let pos: Vec<f64> = set
            .pairs
            .iter()
            .filter(|(_, y)| *y == 1)
            .map(|(s, _)| *s)
            .collect();
        let neg: Vec<f64> = set
            .pairs
            .iter()
            .filter(|(_, y)| *y == 0)
            .map(|(s, _)| *s)
            .collect();
        let mut numerator = 0.0f64;
        for p in &pos {
            for n in &neg {
                if p > n {
                    numerator += 1.0;
                } else if p == n {
                    numerator += 0.5;
                }
            }
        }
        numerator / (pos.len() as f64 * neg.len() as f64)
    }

    #[test]
    fn separated_scores_give_one_and_constant_scores_give_half() {
        let s = set(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]);
        assert_eq!(auroc(&s).unwrap(), 1.0);
        let s = set(&[0.4, 0.4, 0.4, 0.4], &[1, 0, 1, 0]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
    }

    #[test]
    fn fixed_example_scores_three_quarters() {
        // Pairs: (0.35 vs 0.1) win, (0.35 vs 0.4) loss, (0.8 vs both) wins.
        let s = set(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]);
        assert_eq!(auroc(&s).unwrap(), 0.75);
        assert_eq!(pair_count_auroc(&s), 0.75);
    }

    #[test]
    fn single_class_is_undefined() {
        let s = set(&[0.1, 0.2], &[1, 1]);
        assert!(matches!(auroc(&s), Err(EvalError::UndefinedMetric { .. })));
    }

    #[test]
    fn rank_method_equals_pair_counting_exactly_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..300 {
            let n = rng.random_range(2..50);
            // Quantized scores inject plenty of ties.
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..8) as f64) / 8.0)
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            labels[0] = 1;
            labels[n - 1] = 0;
            let s = set(&scores, &labels);
            assert_eq!(auroc(&s).unwrap(), pair_count_auroc(&s));
        }
    }

    #[test]
    fn weighted_auroc_matches_hand_computation() {
        // AUROC 0.9 with 10 positives, 0.6 with 30: (9 + 18) / 40.
        let a = ScoredSet {
            task: "a".into(),
            pairs: make_with_auroc(0.9, 10, 20),
        };
        let b = ScoredSet {
            task: "b".into(),
            pairs: make_with_auroc(0.6, 30, 20),
        };
        let w = weighted_auroc(&[a, b]).unwrap();
        assert!((w - 0.675).abs() < 1e-12);
    }

    /// Builds a scored set with an exact AUROC: positives outscore
    /// negatives except for a controlled number of inverted pairs.
    fn make_with_auroc(target: f64, positives: usize, negatives: usize) -> Vec<(f64, u8)> {
        // Lay out negatives at even scores; positives high, then move one
        // positive down to create exactly the required discordant pairs.
        let total_pairs = positives * negatives;
        let discordant = ((1.0 - target) * total_pairs as f64).round() as usize;
        let mut pairs: Vec<(f64, u8)> = (0..negatives).map(|i| (i as f64, 0u8)).collect();
        for p in 0..positives {
            pairs.push((1000.0 + p as f64, 1u8));
        }
        // Move positives below the top `k` negatives to lose k pairs each.
        let mut remaining = discordant;
        let mut idx = negatives;
        while remaining > 0 {
            let k = remaining.min(negatives);
            pairs[idx].0 = negatives as f64 - k as f64 - 0.5;
            remaining -= k;
            idx += 1;
        }
        pairs
    }

    #[test]
    fn single_task_weighted_equals_plain() {
        let s = set(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]);
        assert_eq!(weighted_auroc(std::slice::from_ref(&s)).unwrap(), auroc(&s).unwrap());
    }

    #[test]
    fn equal_positive_counts_average_arithmetically() {
        let a = ScoredSet {
            task: "a".into(),
            pairs: make_with_auroc(1.0, 5, 5),
        };
        let b = ScoredSet {
            task: "b".into(),
            pairs: make_with_auroc(0.5, 5, 5),
        };
        let (aa, ab) = (auroc(&a).unwrap(), auroc(&b).unwrap());
        let w = weighted_auroc(&[a, b]).unwrap();
        assert!((w - (aa + ab) / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn invariant_under_strictly_increasing_transforms(
            raw in proptest::collection::vec((0u8..4, 0u8..2), 4..60)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 3.0).collect();
            let mut labels: Vec<u8> = raw.iter().map(|(_, y)| *y).collect();
            labels[0] = 1;
            let last = labels.len() - 1;
            labels[last] = 0;
            let base = auroc(&set(&scores, &labels)).unwrap();

            let exp_scores: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let affine_scores: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
            prop_assert_eq!(auroc(&set(&exp_scores, &labels)).unwrap(), base);
            prop_assert_eq!(auroc(&set(&affine_scores, &labels)).unwrap(), base);

            let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
            let complement = auroc(&set(&scores, &flipped)).unwrap();
            prop_assert!((base + complement - 1.0).abs() < 1e-12);
        }
    }
}
