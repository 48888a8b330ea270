//! Penalties steering the sampling policy: split-ratio control and
//! distribution matching between the two sides of a split.

use crate::error::{Error, Result};

/// Additive smoothing constant for soft class histograms.
const HIST_EPS: f64 = 1e-9;

/// Smoothing constant applied to a reference distribution with empty bins.
const KL_EPS: f64 = 1e-9;

/// Distance floor for nearest-neighbour ratios, avoids `log(0)` on duplicate
/// values.
const MIN_DIST: f64 = 1e-12;

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidData("no action probabilities".into()));
    }
    for (i, p) in probs.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(p) {
            return Err(Error::InvalidData(format!(
                "action probability {p} at position {i} is outside [0, 1]"
            )));
        }
    }
    Ok(())
}

fn check_target_ratio(target_ratio: f64) -> Result<()> {
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target train ratio must lie strictly between 0 and 1, got {target_ratio}"
        )));
    }
    Ok(())
}

/// Absolute gap between the mean train probability and the target ratio.
pub fn ratio_gap(probs: &[f64], target_ratio: f64) -> Result<f64> {
    check_probs(probs)?;
    check_target_ratio(target_ratio)?;
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    Ok((mean - target_ratio).abs())
}

/// [`ratio_gap`] plus its subgradient with respect to each probability.
///
/// The subgradient at an exact match is taken as zero.
pub fn ratio_gap_with_grad(probs: &[f64], target_ratio: f64) -> Result<(f64, Vec<f64>)> {
    check_probs(probs)?;
    check_target_ratio(target_ratio)?;
    let m = probs.len() as f64;
    let mean = probs.iter().sum::<f64>() / m;
    let diff = mean - target_ratio;
    let gap = diff.abs();
    let per_element = if diff > 0.0 {
        1.0 / m
    } else if diff < 0.0 {
        -1.0 / m
    } else {
        0.0
    };
    Ok((gap, vec![per_element; probs.len()]))
}

fn check_distribution(name: &str, dist: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for (i, v) in dist.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::InvalidData(format!(
                "{name}[{i}] = {v} is not a valid probability mass"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidData(format!(
            "{name} sums to {sum}, expected 1 within 1e-6"
        )));
    }
    Ok(())
}

/// Kullback-Leibler divergence between two discrete distributions,
/// `sum_c p_c ln(p_c / q_c)` with the convention `0 ln 0 = 0`.
///
/// When `q` has an empty bin that `p` populates, `q` is smoothed by adding a
/// tiny constant to every bin and renormalising, so the result stays finite.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidData(format!(
            "kl_discrete: {} vs {} bins",
            p.len(),
            q.len()
        )));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;

    let needs_smoothing = p
        .iter()
        .zip(q.iter())
        .any(|(pc, qc)| *pc > 0.0 && *qc == 0.0);
    let q_smoothed: Vec<f64>;
    let q = if needs_smoothing {
        let total: f64 = q.iter().map(|v| v + KL_EPS).sum();
        q_smoothed = q.iter().map(|v| (v + KL_EPS) / total).collect();
        &q_smoothed[..]
    } else {
        q
    };

    let mut kl = 0.0;
    for (pc, qc) in p.iter().zip(q.iter()) {
        if *pc > 0.0 {
            kl += pc * (pc / qc).ln();
        }
    }
    Ok(kl)
}

fn check_labels(probs: &[f64], labels: &[usize], num_classes: usize) -> Result<()> {
    if labels.len() != probs.len() {
        return Err(Error::InvalidData(format!(
            "{} labels vs {} probabilities",
            labels.len(),
            probs.len()
        )));
    }
    if num_classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if let Some(bad) = labels.iter().find(|l| **l >= num_classes) {
        return Err(Error::InvalidData(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

struct SoftHistograms {
    /// Smoothed class distribution on the train side.
    p: Vec<f64>,
    /// Smoothed class distribution on the test side.
    q: Vec<f64>,
    /// Smoothed mass normaliser of the train side.
    train_norm: f64,
    /// Smoothed mass normaliser of the test side.
    test_norm: f64,
}

fn soft_histograms(
    probs: &[f64],
    labels: &[usize],
    num_classes: usize,
) -> SoftHistograms {
    let mut train = vec![0.0; num_classes];
    let mut test = vec![0.0; num_classes];
    for (pi, label) in probs.iter().zip(labels.iter()) {
        train[*label] += pi;
        test[*label] += 1.0 - pi;
    }
    let train_norm = train.iter().sum::<f64>() + num_classes as f64 * HIST_EPS;
    let test_norm = test.iter().sum::<f64>() + num_classes as f64 * HIST_EPS;
    let p = train.iter().map(|a| (a + HIST_EPS) / train_norm).collect();
    let q = test.iter().map(|b| (b + HIST_EPS) / test_norm).collect();
    SoftHistograms {
        p,
        q,
        train_norm,
        test_norm,
    }
}

/// Differentiable class-balance penalty for classification splits.
///
/// Builds probability-weighted (soft) class histograms for the train and test
/// sides from the per-sample train probabilities, smooths them, and returns
/// the KL divergence of the test-side distribution from the train-side one.
pub fn iid_penalty_soft(
    probs: &[f64],
    labels: &[usize],
    num_classes: usize,
) -> Result<f64> {
    check_probs(probs)?;
    check_labels(probs, labels, num_classes)?;
    let h = soft_histograms(probs, labels, num_classes);
    let mut kl = 0.0;
    for (qc, pc) in h.q.iter().zip(h.p.iter()) {
        kl += qc * (qc / pc).ln();
    }
    Ok(kl)
}

/// [`iid_penalty_soft`] plus its gradient with respect to each train
/// probability.
pub fn iid_penalty_soft_with_grad(
    probs: &[f64],
    labels: &[usize],
    num_classes: usize,
) -> Result<(f64, Vec<f64>)> {
    check_probs(probs)?;
    check_labels(probs, labels, num_classes)?;
    let h = soft_histograms(probs, labels, num_classes);
    let mut kl = 0.0;
    for (qc, pc) in h.q.iter().zip(h.p.iter()) {
        kl += qc * (qc / pc).ln();
    }
    // For a sample with label l:
    //   d KL / d pi = (KL - ln(q_l / p_l)) / test_norm + (1 - q_l / p_l) / train_norm
    // obtained by differentiating the smoothed histograms directly.
    let mut per_class = vec![0.0; num_classes];
    for c in 0..num_classes {
        let ratio = h.q[c] / h.p[c];
        per_class[c] = (kl - ratio.ln()) / h.test_norm + (1.0 - ratio) / h.train_norm;
    }
    let grad = labels.iter().map(|l| per_class[*l]).collect();
    Ok((kl, grad))
}

/// Nearest-neighbour estimate of the KL divergence between two univariate
/// continuous samples, `KL(P || Q)`.
///
/// Uses the ratio of k-th nearest-neighbour distances within `samples_p`
/// (excluding self) and towards `samples_q`. The estimate is clamped at zero:
/// a negative estimate means the samples are indistinguishable at this
/// resolution, which as a penalty is zero.
pub fn kl_knn(samples_p: &[f64], samples_q: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("kl_knn: k must be positive".into()));
    }
    let n = samples_p.len();
    let m = samples_q.len();
    if n < k + 1 {
        return Err(Error::InvalidData(format!(
            "kl_knn: need at least {} samples in p for k = {k}, got {n}",
            k + 1
        )));
    }
    if m < k {
        return Err(Error::InvalidData(format!(
            "kl_knn: need at least {k} samples in q, got {m}"
        )));
    }
    if samples_p.iter().chain(samples_q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kl_knn: non-finite sample".into()));
    }

    let kth_distance = |x: f64, pool: &[f64], skip_one_zero: bool| -> f64 {
        let mut dists: Vec<f64> = pool.iter().map(|y| (x - y).abs()).collect();
        if skip_one_zero {
            // Remove the self-distance: exactly one zero entry is the point
            // itself; with duplicates any zero entry is interchangeable.
            let idx = dists
                .iter()
                .position(|d| *d == 0.0)
                .expect("self distance present");
            dists.swap_remove(idx);
        }
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| {
            a.partial_cmp(b).expect("distances are finite")
        });
        kth.max(MIN_DIST)
    };

    let mut sum = 0.0;
    for &x in samples_p {
        let rho = kth_distance(x, samples_p, true);
        let nu = kth_distance(x, samples_q, false);
        sum += (nu / rho).ln();
    }
    let estimate =
        sum / n as f64 + ((m as f64) / (n as f64 - 1.0)).ln();
    Ok(estimate.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::standard_normal;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn finite_difference(
        f: impl Fn(&[f64]) -> f64,
        x: &[f64],
        h: f64,
    ) -> Vec<f64> {
        let mut grad = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let down = f(&xp);
            xp[i] = orig;
            grad[i] = (up - down) / (2.0 * h);
        }
        grad
    }

    #[test]
    fn ratio_gap_value_and_grad() {
        let probs = [0.9, 0.7, 0.8];
        let (gap, grad) = ratio_gap_with_grad(&probs, 0.5).unwrap();
        assert!((gap - 0.3).abs() < 1e-12);
        for g in &grad {
            assert!((g - 1.0 / 3.0).abs() < 1e-12);
        }
        let (gap, grad) = ratio_gap_with_grad(&probs, 0.9).unwrap();
        assert!((gap - 0.1).abs() < 1e-12);
        assert!(grad.iter().all(|g| (*g + 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn ratio_gap_validates_inputs() {
        assert!(ratio_gap(&[0.5], 0.0).is_err());
        assert!(ratio_gap(&[0.5], 1.0).is_err());
        assert!(ratio_gap(&[1.5], 0.5).is_err());
        assert!(ratio_gap(&[], 0.5).is_err());
    }

    #[test]
    fn kl_discrete_known_values() {
        assert_eq!(kl_discrete(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let got = kl_discrete(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        let want = (5.0f64 / 3.0).ln();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        let got = kl_discrete(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((got - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn kl_discrete_smooths_empty_reference_bins() {
        let got = kl_discrete(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(got.is_finite());
        assert!(got > 5.0, "smoothing should yield a large penalty, got {got}");
    }

    #[test]
    fn kl_discrete_rejects_invalid_distributions() {
        assert!(kl_discrete(&[0.5, 0.5], &[0.5]).is_err());
        assert!(kl_discrete(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
        assert!(kl_discrete(&[0.3, 0.3], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn iid_penalty_vanishes_for_classwise_uniform_probs() {
        let probs = [0.7, 0.7, 0.7, 0.7];
        let labels = [0usize, 1, 0, 1];
        let kl = iid_penalty_soft(&probs, &labels, 2).unwrap();
        assert!(kl.abs() < 1e-9, "{kl}");
    }

    #[test]
    fn iid_penalty_grows_with_class_skew() {
        // Class 0 nearly always trains, class 1 nearly always tests.
        let probs = [0.95, 0.05, 0.95, 0.05];
        let labels = [0usize, 1, 0, 1];
        let skewed = iid_penalty_soft(&probs, &labels, 2).unwrap();
        let balanced = iid_penalty_soft(&[0.5; 4], &labels, 2).unwrap();
        assert!(skewed > balanced + 0.5, "skewed {skewed}, balanced {balanced}");
    }

    #[test]
    fn iid_penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n = 3 + trial % 8;
            let num_classes = 2 + trial % 3;
            let probs: Vec<f64> =
                (0..n).map(|_| rand::Rng::gen_range(&mut rng, 0.05..0.95)).collect();
            let labels: Vec<usize> =
                (0..n).map(|_| rand::Rng::gen_range(&mut rng, 0..num_classes)).collect();
            if (0..num_classes).any(|c| !labels.contains(&c)) {
                continue;
            }
            let (_, grad) =
                iid_penalty_soft_with_grad(&probs, &labels, num_classes).unwrap();
            let fd = finite_difference(
                |p| iid_penalty_soft(p, &labels, num_classes).unwrap(),
                &probs,
                1e-6,
            );
            for (a, b) in grad.iter().zip(fd.iter()) {
                let scale = a.abs().max(b.abs()).max(1e-3);
                assert!(
                    (a - b).abs() / scale < 1e-5,
                    "analytic {a} vs numeric {b} (trial {trial})"
                );
            }
        }
    }

    #[test]
    fn kl_knn_recovers_the_gaussian_gap() {
        // KL(N(0,1) || N(1,1)) = 0.5 in closed form.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1500;
        let p: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let q: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng) + 1.0).collect();
        let est = kl_knn(&p, &q, 1).unwrap();
        assert!((est - 0.5).abs() < 0.2, "estimate {est}");
    }

    #[test]
    fn kl_knn_is_near_zero_for_identical_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p: Vec<f64> = (0..1500).map(|_| standard_normal(&mut rng)).collect();
        let q: Vec<f64> = (0..1500).map(|_| standard_normal(&mut rng)).collect();
        let est = kl_knn(&p, &q, 1).unwrap();
        assert!(est < 0.1, "estimate {est}");
    }

    #[test]
    fn kl_knn_handles_duplicates_and_validates_sizes() {
        let p = [1.0, 1.0, 2.0];
        let q = [1.0, 2.0, 2.0];
        let est = kl_knn(&p, &q, 1).unwrap();
        assert!(est.is_finite() && est >= 0.0);
        assert!(kl_knn(&[1.0], &q, 1).is_err());
        assert!(kl_knn(&p, &[], 1).is_err());
        assert!(kl_knn(&p, &q, 0).is_err());
    }

    proptest! {
        #[test]
        fn kl_discrete_is_nonnegative(
            raw_p in proptest::collection::vec(1e-3f64..1.0, 2..6),
            raw_q in proptest::collection::vec(1e-3f64..1.0, 2..6),
        ) {
            let c = raw_p.len().min(raw_q.len());
            let sp: f64 = raw_p[..c].iter().sum();
            let sq: f64 = raw_q[..c].iter().sum();
            let p: Vec<f64> = raw_p[..c].iter().map(|v| v / sp).collect();
            let q: Vec<f64> = raw_q[..c].iter().map(|v| v / sq).collect();
            let kl = kl_discrete(&p, &q).unwrap();
            prop_assert!(kl >= -1e-12, "kl = {}", kl);
        }

        #[test]
        fn iid_penalty_is_nonnegative_and_finite(
            probs in proptest::collection::vec(0.01f64..0.99, 4..20),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<usize> = probs
                .iter()
                .map(|_| rand::Rng::gen_range(&mut rng, 0..3usize))
                .collect();
            let kl = iid_penalty_soft(&probs, &labels, 3).unwrap();
            prop_assert!(kl.is_finite());
            prop_assert!(kl >= -1e-12);
        }
    }
}
