//! Precision@k and nDCG@k for ranked label predictions.
//!
//! DCG discounts a hit at rank position `l` (1-based) by `1/log2(l + 1)`.
//! nDCG divides by the DCG of a perfect ranking of `min(k, |y|)` true labels,
//! and is 0 for points without labels.

use std::fmt::Write as _;

use thiserror::Error;

use crate::data_io::{Dataset, LabelSet};
use crate::predictor::{ranked_labels, Scores};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{predictions} predictions for {points} test points")]
    CountMismatch { predictions: usize, points: usize },
    #[error("k values must be at least 1")]
    ZeroK,
}

/// Indices of the `k` largest scores, descending, ties by ascending index.
pub fn rank_k(scores: &[f64], k: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..scores.len() as u32).collect();
    idx.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn hits(ranking: &[u32], truth: &LabelSet, k: usize) -> usize {
    ranking.iter().take(k).filter(|&&l| truth.contains(l)).count()
}

/// Precision@k of a ranked label list.
pub fn precision_of_ranking(ranking: &[u32], truth: &LabelSet, k: usize) -> f64 {
    hits(ranking, truth, k) as f64 / k as f64
}

pub fn dcg_of_ranking(ranking: &[u32], truth: &LabelSet, k: usize) -> f64 {
    ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &l)| truth.contains(l))
        .map(|(pos, _)| 1.0 / ((pos + 2) as f64).log2())
        .sum()
}

/// DCG of a perfect ranking: `sum_{l=1}^{min(k, |y|)} 1/log2(l + 1)`.
pub fn ideal_dcg(k: usize, num_true: usize) -> f64 {
    (1..=k.min(num_true)).map(|l| 1.0 / ((l + 1) as f64).log2()).sum()
}

pub fn ndcg_of_ranking(ranking: &[u32], truth: &LabelSet, k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    dcg_of_ranking(ranking, truth, k) / ideal_dcg(k, truth.len())
}

pub fn precision_at_k(scores: &[f64], truth: &LabelSet, k: usize) -> f64 {
    precision_of_ranking(&rank_k(scores, k), truth, k)
}

pub fn dcg_at_k(scores: &[f64], truth: &LabelSet, k: usize) -> f64 {
    dcg_of_ranking(&rank_k(scores, k), truth, k)
}

pub fn ndcg_at_k(scores: &[f64], truth: &LabelSet, k: usize) -> f64 {
    ndcg_of_ranking(&rank_k(scores, k), truth, k)
}

/// Mean P@k and nDCG@k over a test set, as fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub precision: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub num_points: usize,
}

fn percent(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

impl MetricReport {
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.precision[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }

    /// Aligned table of percentages with two decimals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>8}", "metric", "value");
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(out, "{:<8} {:>8}", format!("P@{k}"), percent(self.precision[i]));
        }
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(out, "{:<8} {:>8}", format!("nDCG@{k}"), percent(self.ndcg[i]));
        }
        let _ = writeln!(out, "({} test points)", self.num_points);
        out
    }

    /// `P@1=66.03` style lines, one per metric.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(out, "P@{k}={}", percent(self.precision[i]));
        }
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(out, "nDCG@{k}={}", percent(self.ndcg[i]));
        }
        out
    }
}

/// Averages per-point metrics over the test set.
///
/// Each prediction is ranked by descending score (ties by ascending label);
/// unscored labels are never ranked. Unlabeled test points contribute 0
/// unless `skip_unlabeled` drops them from the average.
pub fn evaluate(
    predictions: &[Scores],
    test: &Dataset,
    ks: &[usize],
    skip_unlabeled: bool,
) -> Result<MetricReport, MetricsError> {
    if predictions.len() != test.num_points() {
        return Err(MetricsError::CountMismatch {
            predictions: predictions.len(),
            points: test.num_points(),
        });
    }
    if ks.contains(&0) {
        return Err(MetricsError::ZeroK);
    }
    let mut precision = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    let mut counted = 0usize;
    for (scores, point) in predictions.iter().zip(test.points()) {
        if skip_unlabeled && point.labels.is_empty() {
            continue;
        }
        counted += 1;
        let ranking: Vec<u32> = ranked_labels(scores).into_iter().map(|(l, _)| l).collect();
        for (i, &k) in ks.iter().enumerate() {
            precision[i] += precision_of_ranking(&ranking, &point.labels, k);
            ndcg[i] += ndcg_of_ranking(&ranking, &point.labels, k);
        }
    }
    if counted > 0 {
        let inv = counted as f64;
        precision.iter_mut().for_each(|v| *v /= inv);
        ndcg.iter_mut().for_each(|v| *v /= inv);
    }
    Ok(MetricReport {
        ks: ks.to_vec(),
        precision,
        ndcg,
        num_points: counted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{Point, SparseVector};

    fn ls(v: &[u32]) -> LabelSet {
        LabelSet::new(v.to_vec())
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_k(&[0.1, 0.9, 0.5], 2), vec![1, 2]);
        assert_eq!(rank_k(&[0.3, 0.3, 0.3], 2), vec![0, 1]);
        assert_eq!(rank_k(&[0.3], 4), vec![0]);
    }

    #[test]
    fn precision_examples() {
        let scores = [0.9, 0.8, 0.7, 0.1];
        assert_eq!(precision_at_k(&scores, &ls(&[0, 1, 2]), 3), 1.0);
        assert_eq!(precision_at_k(&scores, &ls(&[]), 3), 0.0);
        assert!((precision_at_k(&scores, &ls(&[0, 2]), 3) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ndcg_hand_example() {
        // hits at positions 1 and 3, |y| = 2
        let scores = [0.9, 0.8, 0.7, 0.1];
        let y = ls(&[0, 2]);
        assert!((dcg_at_k(&scores, &y, 3) - 1.5).abs() < 1e-15);
        let ideal = 1.0 + 1.0 / 3f64.log2();
        assert!((ideal - 1.630_929_753_571_457_4).abs() < 1e-15);
        let n = ndcg_at_k(&scores, &y, 3);
        assert!((n - 1.5 / ideal).abs() < 1e-15);
        assert!((n - 0.91972).abs() < 5e-6, "{n}");
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let scores = [0.9, 0.8, 0.7, 0.1, 0.6];
        assert_eq!(ndcg_at_k(&scores, &ls(&[0, 1, 2, 4]), 3), 1.0);
        assert_eq!(ndcg_at_k(&scores, &ls(&[0]), 3), 1.0);
        assert_eq!(ndcg_at_k(&scores, &ls(&[]), 3), 0.0);
    }

    #[test]
    fn ndcg_at_one_is_precision_at_one() {
        let scores = [0.2, 0.9, 0.4];
        for y in [ls(&[1]), ls(&[0, 2]), ls(&[]), ls(&[1, 2])] {
            assert_eq!(ndcg_at_k(&scores, &y, 1), precision_at_k(&scores, &y, 1));
        }
    }

    fn test_set(labels: &[&[u32]]) -> Dataset {
        let points = labels
            .iter()
            .map(|l| Point {
                features: SparseVector::new(),
                labels: ls(l),
            })
            .collect();
        Dataset::new(1, 10, points).unwrap()
    }

    fn scores(pairs: &[(u32, f64)]) -> Scores {
        pairs.iter().copied().collect()
    }

    #[test]
    fn evaluate_averages() {
        let test = test_set(&[&[1], &[2]]);
        let preds = vec![scores(&[(1, 1.0)]), scores(&[(3, 1.0)])];
        let r = evaluate(&preds, &test, &[1], false).unwrap();
        assert_eq!(r.to_key_values(), "P@1=50.00\nnDCG@1=50.00\n");
    }

    #[test]
    fn evaluate_all_perfect() {
        let test = test_set(&[&[0, 1, 2, 3, 4], &[5, 6, 7, 8, 9]]);
        let preds: Vec<Scores> = test
            .points()
            .iter()
            .map(|p| p.labels.iter().map(|l| (l, 1.0)).collect())
            .collect();
        let r = evaluate(&preds, &test, &[1, 3, 5], false).unwrap();
        assert!(r.precision.iter().chain(&r.ndcg).all(|&v| v == 1.0));
        assert!(r.to_table().lines().any(|l| l.split_whitespace().eq(["P@5", "100.00"])));
    }

    #[test]
    fn unlabeled_points() {
        let test = test_set(&[&[1], &[]]);
        let preds = vec![scores(&[(1, 1.0)]), scores(&[(3, 1.0)])];
        assert_eq!(evaluate(&preds, &test, &[1], false).unwrap().precision, vec![0.5]);
        let skipped = evaluate(&preds, &test, &[1], true).unwrap();
        assert_eq!(skipped.precision, vec![1.0]);
        assert_eq!(skipped.num_points, 1);
    }

    #[test]
    fn count_mismatch() {
        let test = test_set(&[&[1]]);
        assert_eq!(
            evaluate(&[], &test, &[1], false),
            Err(MetricsError::CountMismatch { predictions: 0, points: 1 })
        );
    }
}
