//! Demographic parity and AUC.

use crate::error::CoreError;
use crate::Result;

/// Demographic parity violation of thresholded predictions across sensitive
/// groups: `|Pr(Yhat=1|S=1) - Pr(Yhat=1|S=0)|` for two groups, the maximum
/// pairwise difference (= max rate - min rate) otherwise.
///
/// Every group in `0..n_groups` must appear in `sensitive`.
pub fn delta_dp(predictions: &[u8], sensitive: &[usize], n_groups: usize) -> Result<f64> {
    if predictions.len() != sensitive.len() {
        return Err(CoreError::shape(format!(
            "{} predictions vs {} sensitive codes",
            predictions.len(),
            sensitive.len()
        )));
    }
    if n_groups < 2 {
        return Err(CoreError::domain("need at least two groups".to_string()));
    }
    let mut pos = vec![0usize; n_groups];
    let mut tot = vec![0usize; n_groups];
    for (&p, &s) in predictions.iter().zip(sensitive) {
        if s >= n_groups {
            return Err(CoreError::domain(format!(
                "sensitive code {s} out of range"
            )));
        }
        if p > 1 {
            return Err(CoreError::domain("predictions must be 0/1".to_string()));
        }
        tot[s] += 1;
        pos[s] += p as usize;
    }
    if let Some(k) = tot.iter().position(|&t| t == 0) {
        return Err(CoreError::data(format!(
            "sensitive group {k} missing from the evaluation set"
        )));
    }
    let rates: Vec<f64> = pos
        .iter()
        .zip(&tot)
        .map(|(&p, &t)| p as f64 / t as f64)
        .collect();
    let max = rates.iter().cloned().fold(f64::MIN, f64::max);
    let min = rates.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max - min)
}

/// Area under the ROC curve, rank-based and tie-aware: the probability that
/// a uniformly random positive outscores a uniformly random negative, with
/// ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(CoreError::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
        return Err(CoreError::domain(format!("non-finite score {bad}")));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CoreError::data(
            "AUC needs both classes present".to_string(),
        ));
    }
    // average ranks with midranks for ties
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct counting oracle for demographic parity.
    fn delta_dp_oracle(predictions: &[u8], sensitive: &[usize], n_groups: usize) -> f64 {
        let mut best = 0.0f64;
        for a in 0..n_groups {
            for b in 0..n_groups {
                let rate = |g: usize| {
                    let (mut p, mut t) = (0.0, 0.0);
                    for (&y, &s) in predictions.iter().zip(sensitive) {
                        if s == g {
                            t += 1.0;
                            p += y as f64;
                        }
                    }
                    p / t
                };
                best = best.max((rate(a) - rate(b)).abs());
            }
        }
        best
    }

    /// Exhaustive pairwise-comparison oracle for AUC.
    fn auc_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0f64;
        let mut pairs = 0.0f64;
        for (i, &yi) in labels.iter().enumerate() {
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn constant_predictor_is_perfectly_fair() {
        assert_eq!(delta_dp(&[1, 1, 1, 1], &[0, 1, 0, 1], 2).unwrap(), 0.0);
        assert_eq!(delta_dp(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap(), 0.0);
    }

    #[test]
    fn two_group_example() {
        // group 0 rate 0.5, group 1 rate 1.0
        let preds = [1, 1, 0, 0, 1, 1, 1, 1];
        let sens = [0, 0, 0, 0, 1, 1, 1, 1];
        assert_abs_diff_eq!(delta_dp(&preds, &sens, 2).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn three_group_max_pairwise() {
        // rates 0.2, 0.5, 0.9 over 10-row groups
        let mut preds = Vec::new();
        let mut sens = Vec::new();
        for (g, rate) in [(0usize, 2usize), (1, 5), (2, 9)] {
            for i in 0..10 {
                preds.push(u8::from(i < rate));
                sens.push(g);
            }
        }
        assert_abs_diff_eq!(delta_dp(&preds, &sens, 3).unwrap(), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn missing_group_is_an_error() {
        assert!(delta_dp(&[1, 0], &[0, 0], 2).is_err());
    }

    #[test]
    fn exhaustive_brute_force_small_cases() {
        // all prediction vectors for n <= 12 against seeded group layouts
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2usize..=12 {
            for k in 2usize..=3 {
                // a group layout guaranteed to cover every group
                let mut sens: Vec<usize> = (0..n).map(|i| i % k).collect();
                if n >= k + 2 {
                    for s in sens.iter_mut().skip(k) {
                        *s = rng.gen_range(0..k);
                    }
                }
                for mask in 0u32..(1 << n) {
                    let preds: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
                    let fast = delta_dp(&preds, &sens, k).unwrap();
                    let slow = delta_dp_oracle(&preds, &sens, k);
                    assert!(
                        (fast - slow).abs() < 1e-12,
                        "n={n} k={k} mask={mask}: {fast} vs {slow}"
                    );
                }
            }
        }
    }

    #[test]
    fn auc_perfect_and_tied() {
        let labels = [0, 0, 1, 1];
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
    }

    #[test]
    fn auc_single_class_errors() {
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [5usize, 17, 50] {
            for _ in 0..20 {
                let labels: Vec<u8> = loop {
                    let l: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
                    let pos = l.iter().filter(|&&y| y == 1).count();
                    if pos > 0 && pos < n {
                        break l;
                    }
                };
                // quantized scores force plenty of ties
                let scores: Vec<f64> =
                    (0..n).map(|_| (rng.gen_range(0..6) as f64) / 5.0).collect();
                let fast = auc(&scores, &labels).unwrap();
                let slow = auc_oracle(&scores, &labels);
                assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
            }
        }
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let a = auc(&scores, &labels).unwrap();
        assert!((a - 0.5).abs() < 0.02, "auc {a}");
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in proptest::collection::vec((0.0..1.0f64, 0..2u8), 4..60)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, y)| *y).collect();
            let pos = labels.iter().filter(|&&y| y == 1).count();
            prop_assume!(pos > 0 && pos < labels.len());
            let base = auc(&scores, &labels).unwrap();
            // strictly increasing transform: exp then affine
            let transformed: Vec<f64> = scores.iter().map(|s| 3.0 * s.exp() + 1.0).collect();
            let t = auc(&transformed, &labels).unwrap();
            prop_assert!((base - t).abs() < 1e-12);
        }

        #[test]
        fn delta_dp_invariant_under_group_relabeling(
            rows in proptest::collection::vec((0..3usize, 0..2u8), 9..40)
        ) {
            let sens: Vec<usize> = rows.iter().map(|(s, _)| *s).collect();
            let preds: Vec<u8> = rows.iter().map(|(_, y)| *y).collect();
            for k in 0..3usize {
                prop_assume!(sens.contains(&k));
            }
            let base = delta_dp(&preds, &sens, 3).unwrap();
            // swap labels of groups 0 and 2
            let relabeled: Vec<usize> = sens.iter().map(|&s| match s {
                0 => 2,
                2 => 0,
                other => other,
            }).collect();
            let swapped = delta_dp(&preds, &relabeled, 3).unwrap();
            prop_assert!((base - swapped).abs() < 1e-12);
        }
    }
}
