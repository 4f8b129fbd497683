//! Ranking metrics.

use std::cmp::Ordering;

use crate::scalar::Scalar;

/// Binary ROC AUC by the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// `None` when either class is absent.
pub fn binary_auc<T: Scalar>(scores: &[T], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Sum of 1-based ranks of the positives, tied groups sharing their mean rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| positive[k]).count();
        rank_sum += mean_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Macro-averaged one-vs-rest AUC.
///
/// `scores[q][c]` is the score of query `q` for class column `c`, and
/// `true_labels[q]` is the column of its true class. Classes without both a
/// positive and a negative query are skipped; if none qualify the result is 0.5.
pub fn auc_one_vs_rest<T: Scalar, S: AsRef<[T]>>(scores: &[S], true_labels: &[usize]) -> f64 {
    let n_classes = scores.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
    let mut total = 0.0;
    let mut counted = 0usize;
    for c in 0..n_classes {
        let col: Vec<T> = scores
            .iter()
            .map(|s| s.as_ref().get(c).copied().unwrap_or_else(T::zero))
            .collect();
        let positive: Vec<bool> = true_labels.iter().map(|&y| y == c).collect();
        if let Some(auc) = binary_auc(&col, &positive) {
            total += auc;
            counted += 1;
        }
    }
    if counted == 0 {
        0.5
    } else {
        total / counted as f64
    }
}
