//! Post-hoc scoring of a fixed split with a panel of learners.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learners::{LearnerSpec, Predictions};
use crate::regularizers::{kl_discrete, kl_knn};
use crate::rewards::{ensemble_metric, MetricKind};
use crate::seeds::{SeedSpace, Stream};
use crate::split::Split;

/// Metric value for one fitted learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerScore {
    pub learner: String,
    pub score: f64,
}

/// Per-class sample counts on each side of a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassBalance {
    pub class: usize,
    pub n_train: usize,
    pub n_test: usize,
}

/// Everything the evaluation command reports about one split.
#[derive(Debug, Clone)]
pub struct SplitReport {
    pub n_train: usize,
    pub n_test: usize,
    pub train_ratio: f64,
    pub metric: MetricKind,
    pub per_learner: Vec<LearnerScore>,
    pub ensemble: f64,
    /// Divergence of the test target distribution from the train one:
    /// smoothed class histograms for classification, a nearest-neighbour
    /// estimate for regression.
    pub divergence: f64,
    /// Present for classification tasks only.
    pub class_balance: Option<Vec<ClassBalance>>,
}

/// Divergence of the test targets from the train targets, test side first.
pub fn target_divergence(
    dataset: &Dataset,
    split: &Split,
    knn_k: usize,
) -> Result<f64> {
    let (y_train, y_test) = split.partition_values(dataset.targets());
    match dataset.task().num_classes() {
        Some(num_classes) => {
            let (train_counts, test_counts) =
                split.class_counts(dataset.targets(), num_classes);
            let to_dist = |counts: &[usize], total: usize| {
                counts.iter().map(|c| *c as f64 / total as f64).collect::<Vec<f64>>()
            };
            kl_discrete(
                &to_dist(&test_counts, y_test.len()),
                &to_dist(&train_counts, y_train.len()),
            )
        }
        None => kl_knn(
            y_test.as_slice().expect("contiguous"),
            y_train.as_slice().expect("contiguous"),
            knn_k,
        ),
    }
}

/// Fits every learner on the train side and scores each one, plus their
/// ensemble, on the test side.
pub fn evaluate_split(
    dataset: &Dataset,
    split: &Split,
    learners: &[LearnerSpec],
    metric: MetricKind,
    seed: u64,
    knn_k: usize,
) -> Result<SplitReport> {
    if split.len() != dataset.n_samples() {
        return Err(Error::InvalidData(format!(
            "split covers {} samples but the dataset has {}",
            split.len(),
            dataset.n_samples()
        )));
    }
    if learners.is_empty() {
        return Err(Error::InvalidConfig("no learners to evaluate".into()));
    }
    let task = dataset.task();
    metric.validate_for(task)?;

    let (x_train, x_test) = split.partition_rows(dataset.features());
    let (y_train, y_test) = split.partition_values(dataset.targets());

    let seeds = SeedSpace::new(seed);
    let preds: Vec<Predictions> = learners
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let seed_i = seeds.seed(Stream::Learner(i as u64));
            let fitted = spec.fit(x_train.view(), y_train.view(), task, seed_i)?;
            fitted.predict(x_test.view())
        })
        .collect::<Result<Vec<_>>>()?;

    let per_learner = learners
        .iter()
        .zip(&preds)
        .map(|(spec, pred)| {
            Ok(LearnerScore {
                learner: spec.kind().name().to_string(),
                score: metric.compute(&y_test.view(), pred)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = ensemble_metric(metric, &y_test.view(), &preds)?;
    let divergence = target_divergence(dataset, split, knn_k)?;

    let class_balance = task.num_classes().map(|num_classes| {
        let (train_counts, test_counts) = split.class_counts(dataset.targets(), num_classes);
        (0..num_classes)
            .map(|class| ClassBalance {
                class,
                n_train: train_counts[class],
                n_test: test_counts[class],
            })
            .collect()
    });

    Ok(SplitReport {
        n_train: split.n_train(),
        n_test: split.n_test(),
        train_ratio: split.train_ratio(),
        metric,
        per_learner,
        ensemble,
        divergence,
        class_balance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::baselines::{stratified_split, random_split};
    use crate::engine::synth;
    use crate::learners::LearnerKind;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn specs(kinds: &[LearnerKind]) -> Vec<LearnerSpec> {
        kinds.iter().map(|k| LearnerSpec::with_defaults(*k)).collect()
    }

    #[test]
    fn reports_scores_for_an_easy_classification_split() {
        let data = synth::clusters(120, 3, 1, 4.0, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let split =
            stratified_split(&data.targets().view(), 2, 0.7, &mut rng).unwrap();
        let report = evaluate_split(
            &data,
            &split,
            &specs(&[LearnerKind::Logistic, LearnerKind::Tree]),
            MetricKind::Auc,
            7,
            1,
        )
        .unwrap();
        assert_eq!(report.n_train, 84);
        assert_eq!(report.n_test, 36);
        assert_eq!(report.per_learner.len(), 2);
        assert_eq!(report.per_learner[0].learner, "logistic");
        assert!(report.ensemble > 0.9, "ensemble auc {}", report.ensemble);
        assert!(report.divergence >= 0.0 && report.divergence < 0.05);
        let balance = report.class_balance.unwrap();
        assert_eq!(balance.len(), 2);
        assert_eq!(balance[0].n_train + balance[0].n_test, 60);
    }

    #[test]
    fn reports_divergence_for_regression_splits() {
        let data = synth::linear_regression(160, 3, 0.2, 22).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let split = random_split(160, 0.75, &mut rng).unwrap();
        let report = evaluate_split(
            &data,
            &split,
            &specs(&[LearnerKind::Ridge]),
            MetricKind::RSquared,
            7,
            1,
        )
        .unwrap();
        assert!(report.class_balance.is_none());
        assert!(report.per_learner[0].score > 0.8);
        assert!(report.divergence.is_finite() && report.divergence >= 0.0);
    }

    #[test]
    fn is_deterministic_for_a_fixed_seed() {
        let data = synth::clusters(80, 2, 2, 2.0, 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let split = random_split(80, 0.6, &mut rng).unwrap();
        let spec = specs(&[LearnerKind::Forest, LearnerKind::Mlp]);
        let a = evaluate_split(&data, &split, &spec, MetricKind::Auc, 9, 1).unwrap();
        let b = evaluate_split(&data, &split, &spec, MetricKind::Auc, 9, 1).unwrap();
        assert_eq!(a.per_learner, b.per_learner);
        assert_eq!(a.ensemble, b.ensemble);
    }

    #[test]
    fn rejects_mismatched_split_lengths() {
        let data = synth::clusters(40, 2, 0, 2.0, 24).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let split = random_split(39, 0.5, &mut rng).unwrap();
        let err = evaluate_split(
            &data,
            &split,
            &specs(&[LearnerKind::Tree]),
            MetricKind::Auc,
            0,
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("39"), "{err}");
    }
}
