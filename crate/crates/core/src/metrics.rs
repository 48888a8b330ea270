//! Evaluation metrics. All metrics are oriented so that larger is better.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Ranks `values` 1-based, giving tied entries the average of their ranks.
fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ranking requires finite values".into()));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| values[*a].partial_cmp(&values[*b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// Area under the ROC curve for binary labels and positive-class scores.
///
/// Computed from the rank-sum statistic with tie-averaged ranks, which equals
/// counting concordant score pairs (ties worth one half).
pub fn auc(labels: &ArrayView1<f64>, scores: &ArrayView1<f64>) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidData(format!(
            "auc: {} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if labels.iter().any(|y| *y != 0.0 && *y != 1.0) {
        return Err(Error::InvalidData("auc: labels must be 0 or 1".into()));
    }
    let n_pos = labels.iter().filter(|y| **y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidData(
            "auc: both classes must be present".into(),
        ));
    }
    let ranks = average_ranks(scores.as_slice().unwrap_or(&scores.to_vec()))?;
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(ranks.iter())
        .filter(|(y, _)| **y == 1.0)
        .map(|(_, r)| r)
        .sum();
    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Micro-averaged F1 over single-label class predictions.
///
/// Aggregates true/false positives and false negatives over all classes
/// before forming the harmonic mean.
pub fn micro_f1(
    labels: &ArrayView1<f64>,
    predicted: &[usize],
    num_classes: usize,
) -> Result<f64> {
    if labels.len() != predicted.len() {
        return Err(Error::InvalidData(format!(
            "micro_f1: {} labels vs {} predictions",
            labels.len(),
            predicted.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidData("micro_f1: empty input".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (y, p) in labels.iter().zip(predicted.iter()) {
        let y = *y as usize;
        if y >= num_classes || *p >= num_classes {
            return Err(Error::InvalidData(format!(
                "micro_f1: class out of range (label {y}, prediction {p}, \
                 {num_classes} classes)"
            )));
        }
        if y == *p {
            tp[y] += 1;
        } else {
            fp[*p] += 1;
            fn_[y] += 1;
        }
    }
    let tp: usize = tp.iter().sum();
    let fp: usize = fp.iter().sum();
    let fn_: usize = fn_.iter().sum();
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Err(Error::InvalidData("micro_f1: no predictions".into()));
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

/// Coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r_squared(y_true: &ArrayView1<f64>, y_pred: &ArrayView1<f64>) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidData(format!(
            "r_squared: {} targets vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidData("r_squared: empty input".into()));
    }
    if y_pred.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("r_squared: non-finite prediction".into()));
    }
    let mean = y_true.sum() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::InvalidData(
            "r_squared: targets are constant, variance is zero".into(),
        ));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred.iter())
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Element-wise average of per-learner class probability matrices.
///
/// Rows are renormalised only when floating error drifts their sum away from
/// one by more than 1e-9.
pub fn soft_vote(probs: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = probs
        .first()
        .ok_or_else(|| Error::InvalidData("soft_vote: no probability matrices".into()))?;
    let shape = first.dim();
    for (k, p) in probs.iter().enumerate() {
        if p.dim() != shape {
            return Err(Error::InvalidData(format!(
                "soft_vote: matrix {k} has shape {:?}, expected {:?}",
                p.dim(),
                shape
            )));
        }
    }
    let mut mean = Array2::zeros(shape);
    for p in probs {
        mean += p;
    }
    mean /= probs.len() as f64;
    for mut row in mean.rows_mut() {
        let sum: f64 = row.sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::NonFinite(
                "soft_vote: row does not sum to a positive value".into(),
            ));
        }
        if (sum - 1.0).abs() > 1e-9 {
            row /= sum;
        }
    }
    Ok(mean)
}

/// Element-wise average of per-learner regression predictions.
pub fn mean_vote(preds: &[Array1<f64>]) -> Result<Array1<f64>> {
    let first = preds
        .first()
        .ok_or_else(|| Error::InvalidData("mean_vote: no prediction vectors".into()))?;
    let n = first.len();
    for (k, p) in preds.iter().enumerate() {
        if p.len() != n {
            return Err(Error::InvalidData(format!(
                "mean_vote: vector {k} has length {}, expected {n}",
                p.len()
            )));
        }
    }
    let mut mean = Array1::zeros(n);
    for p in preds {
        mean += p;
    }
    mean /= preds.len() as f64;
    Ok(mean)
}

/// Row-wise argmax with ties broken towards the lowest class index.
pub fn argmax_rows(probs: &ArrayView2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Spearman rank correlation between two equal-length sequences.
///
/// Errors when either sequence is constant, where the correlation is
/// undefined.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidData(format!(
            "spearman: lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidData(
            "spearman: need at least two observations".into(),
        ));
    }
    let ra = average_ranks(a)?;
    let rb = average_ranks(b)?;
    let n = a.len() as f64;
    let mean_a: f64 = ra.iter().sum::<f64>() / n;
    let mean_b: f64 = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(rb.iter()) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a).powi(2);
        var_b += (y - mean_b).powi(2);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::InvalidData(
            "spearman: undefined for constant input".into(),
        ));
    }
    Ok(cov / (var_a * var_b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct pair-counting AUC: concordant pairs win 1, ties win 1/2.
    fn auc_pair_oracle(labels: &[f64], scores: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, yi) in labels.iter().enumerate() {
            if *yi != 1.0 {
                continue;
            }
            for (j, yj) in labels.iter().enumerate() {
                if *yj != 0.0 {
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
    fn auc_matches_hand_example() {
        let y = array![0.0, 0.0, 1.0, 1.0];
        let s = array![0.1, 0.4, 0.35, 0.8];
        assert!((auc(&y.view(), &s.view()).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn auc_extremes_and_ties() {
        let y = array![0.0, 1.0];
        assert_eq!(auc(&y.view(), &array![0.2, 0.9].view()).unwrap(), 1.0);
        assert_eq!(auc(&y.view(), &array![0.9, 0.2].view()).unwrap(), 0.0);
        assert_eq!(auc(&y.view(), &array![0.5, 0.5].view()).unwrap(), 0.5);
    }

    #[test]
    fn auc_requires_both_classes() {
        let y = array![1.0, 1.0];
        let s = array![0.1, 0.2];
        assert!(auc(&y.view(), &s.view()).is_err());
    }

    #[test]
    fn auc_equals_pair_counting_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(2..=50);
            let labels: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
                .collect();
            if !labels.contains(&1.0) || !labels.contains(&0.0) {
                continue;
            }
            // Coarse grid so ties actually happen.
            let scores: Vec<f64> =
                (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
            let got = auc(
                &Array1::from(labels.clone()).view(),
                &Array1::from(scores.clone()).view(),
            )
            .unwrap();
            let want = auc_pair_oracle(&labels, &scores);
            assert!(
                (got - want).abs() < 1e-12,
                "got {got}, oracle {want}, labels {labels:?}, scores {scores:?}"
            );
        }
    }

    #[test]
    fn micro_f1_equals_accuracy_for_single_label() {
        let y = array![0.0, 1.0, 2.0, 1.0, 0.0];
        let p = vec![0, 1, 1, 1, 2];
        let f1 = micro_f1(&y.view(), &p, 3).unwrap();
        let accuracy = 3.0 / 5.0;
        assert!((f1 - accuracy).abs() < 1e-15);
    }

    #[test]
    fn micro_f1_rejects_out_of_range_classes() {
        let y = array![0.0, 1.0];
        assert!(micro_f1(&y.view(), &[0, 5], 2).is_err());
    }

    #[test]
    fn r_squared_matches_hand_example() {
        let y = array![3.0, -0.5, 2.0, 7.0];
        let p = array![2.5, 0.0, 2.0, 8.0];
        let got = r_squared(&y.view(), &p.view()).unwrap();
        assert!((got - (1.0 - 1.5 / 29.1875)).abs() < 1e-15);
    }

    #[test]
    fn r_squared_special_cases() {
        let y = array![1.0, 2.0, 3.0];
        assert_eq!(r_squared(&y.view(), &y.view()).unwrap(), 1.0);
        let mean_pred = array![2.0, 2.0, 2.0];
        assert_eq!(r_squared(&y.view(), &mean_pred.view()).unwrap(), 0.0);
        let bad = array![10.0, -10.0, 10.0];
        assert!(r_squared(&y.view(), &bad.view()).unwrap() < 0.0);
        let constant = array![5.0, 5.0];
        assert!(r_squared(&constant.view(), &array![5.0, 5.0].view()).is_err());
    }

    #[test]
    fn soft_vote_averages_and_renormalises() {
        let a = array![[0.8, 0.2], [0.4, 0.6]];
        let b = array![[0.6, 0.4], [0.2, 0.8]];
        let v = soft_vote(&[a, b]).unwrap();
        assert!((v[[0, 0]] - 0.7).abs() < 1e-15);
        assert!((v[[1, 1]] - 0.7).abs() < 1e-15);

        // Drifted rows get renormalised.
        let c = array![[0.5, 0.3]];
        let v = soft_vote(&[c]).unwrap();
        assert!((v.row(0).sum() - 1.0).abs() < 1e-15);
        assert!((v[[0, 0]] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn soft_vote_rejects_mismatched_shapes() {
        let a = array![[1.0, 0.0]];
        let b = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(soft_vote(&[a, b]).is_err());
    }

    #[test]
    fn mean_vote_averages_predictions() {
        let v = mean_vote(&[array![1.0, 3.0], array![3.0, 5.0]]).unwrap();
        assert_eq!(v, array![2.0, 4.0]);
    }

    #[test]
    fn argmax_breaks_ties_towards_lowest_index() {
        let p = array![[0.5, 0.5], [0.1, 0.9], [0.3, 0.3]];
        assert_eq!(argmax_rows(&p.view()), vec![0, 1, 0]);
    }

    #[test]
    fn spearman_matches_reference_value() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [5.0, 6.0, 7.0, 8.0, 7.0];
        let got = spearman(&a, &b).unwrap();
        assert!((got - 0.8207826816681233).abs() < 1e-12, "{got}");
    }

    #[test]
    fn spearman_detects_perfect_monotone_relations() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(spearman(&a, &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&a, &[30.0, 20.0, 10.0]).unwrap(), -1.0);
        assert!(spearman(&a, &[1.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn auc_stays_in_unit_interval_and_flips_with_labels(
            labels in proptest::collection::vec(any::<bool>(), 2..40),
            raw in proptest::collection::vec(0u8..8, 2..40),
        ) {
            let n = labels.len().min(raw.len());
            let labels: Vec<f64> =
                labels[..n].iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
            prop_assume!(labels.contains(&1.0) && labels.contains(&0.0));
            let scores: Vec<f64> = raw[..n].iter().map(|v| *v as f64 / 7.0).collect();
            let y = Array1::from(labels.clone());
            let s = Array1::from(scores.clone());
            let a = auc(&y.view(), &s.view()).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));

            let flipped = Array1::from_iter(labels.iter().map(|v| 1.0 - v));
            let b = auc(&flipped.view(), &s.view()).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);

            // Strictly monotone score transforms leave AUC unchanged.
            let t = Array1::from_iter(scores.iter().map(|v| 3.0 * v - 1.0));
            let c = auc(&y.view(), &t.view()).unwrap();
            prop_assert!((a - c).abs() < 1e-12);
        }

        #[test]
        fn r_squared_never_exceeds_one(
            y in proptest::collection::vec(-1e3f64..1e3, 2..30),
            p in proptest::collection::vec(-1e3f64..1e3, 2..30),
        ) {
            let n = y.len().min(p.len());
            let y = Array1::from(y[..n].to_vec());
            let p = Array1::from(p[..n].to_vec());
            if let Ok(r2) = r_squared(&y.view(), &p.view()) {
                prop_assert!(r2 <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn spearman_stays_in_range(
            a in proptest::collection::vec(-50i32..50, 3..30),
            b in proptest::collection::vec(-50i32..50, 3..30),
        ) {
            let n = a.len().min(b.len());
            let a: Vec<f64> = a[..n].iter().map(|v| *v as f64).collect();
            let b: Vec<f64> = b[..n].iter().map(|v| *v as f64).collect();
            if let Ok(r) = spearman(&a, &b) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            }
        }
    }
}
