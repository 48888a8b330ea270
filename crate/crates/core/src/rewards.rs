//! Episode rewards: which metric scores a split and how learner outputs are
//! combined into one return.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::learners::Predictions;
use crate::metrics::{argmax_rows, auc, mean_vote, micro_f1, r_squared, soft_vote};

/// How the episode return is produced from the learner pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMechanism {
    /// Fit every learner and score their ensembled prediction.
    Deterministic,
    /// Draw one learner from a selection distribution and score it alone.
    Stochastic,
}

impl RewardMechanism {
    pub fn name(&self) -> &'static str {
        match self {
            RewardMechanism::Deterministic => "deterministic",
            RewardMechanism::Stochastic => "stochastic",
        }
    }
}

impl fmt::Display for RewardMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardMechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<RewardMechanism> {
        match s {
            "deterministic" => Ok(RewardMechanism::Deterministic),
            "stochastic" => Ok(RewardMechanism::Stochastic),
            other => Err(Error::InvalidConfig(format!(
                "unknown mechanism '{other}'; expected deterministic or stochastic"
            ))),
        }
    }
}

/// The evaluation metric producing the reward. All variants are oriented so
/// that larger is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Auc,
    MicroF1,
    RSquared,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Auc => "auc",
            MetricKind::MicroF1 => "micro_f1",
            MetricKind::RSquared => "r_squared",
        }
    }

    /// The customary metric for a task.
    pub fn default_for(task: Task) -> MetricKind {
        match task {
            Task::Binary => MetricKind::Auc,
            Task::MultiClass { .. } => MetricKind::MicroF1,
            Task::Regression => MetricKind::RSquared,
        }
    }

    pub fn validate_for(&self, task: Task) -> Result<()> {
        let ok = match self {
            MetricKind::Auc => task == Task::Binary,
            MetricKind::MicroF1 => task.is_classification(),
            MetricKind::RSquared => task == Task::Regression,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "metric '{}' does not apply to this task",
                self.name()
            )))
        }
    }

    /// Scores predictions against targets.
    pub fn compute(&self, y_true: &ArrayView1<f64>, preds: &Predictions) -> Result<f64> {
        match self {
            MetricKind::Auc => {
                let probs = preds.class_probs()?;
                if probs.ncols() != 2 {
                    return Err(Error::InvalidData(format!(
                        "auc needs binary probabilities, got {} classes",
                        probs.ncols()
                    )));
                }
                auc(y_true, &probs.column(1))
            }
            MetricKind::MicroF1 => {
                let probs = preds.class_probs()?;
                let predicted = argmax_rows(&probs.view());
                micro_f1(y_true, &predicted, probs.ncols())
            }
            MetricKind::RSquared => r_squared(y_true, &preds.values()?.view()),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<MetricKind> {
        match s {
            "auc" => Ok(MetricKind::Auc),
            "micro_f1" => Ok(MetricKind::MicroF1),
            "r_squared" => Ok(MetricKind::RSquared),
            other => Err(Error::InvalidConfig(format!(
                "unknown metric '{other}'; expected auc, micro_f1 or r_squared"
            ))),
        }
    }
}

/// Scores the ensemble of all learner predictions: element-wise mean of
/// class probabilities (soft voting) or of regression values, then the
/// metric on the combined prediction.
pub fn ensemble_metric(
    metric: MetricKind,
    y_true: &ArrayView1<f64>,
    preds: &[Predictions],
) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidData("ensemble of zero learners".into()));
    }
    let voted = match metric {
        MetricKind::Auc | MetricKind::MicroF1 => {
            let mats: Result<Vec<_>> =
                preds.iter().map(|p| p.class_probs().cloned()).collect();
            Predictions::ClassProbs(soft_vote(&mats?)?)
        }
        MetricKind::RSquared => {
            let vals: Result<Vec<_>> = preds.iter().map(|p| p.values().cloned()).collect();
            Predictions::Values(mean_vote(&vals?)?)
        }
    };
    metric.compute(y_true, &voted)
}

/// Validates a learner-selection distribution: one non-negative weight per
/// learner, summing to one within 1e-6.
pub fn check_rho(rho: &[f64], n_learners: usize) -> Result<()> {
    if rho.len() != n_learners {
        return Err(Error::InvalidConfig(format!(
            "selection distribution has {} weights for {n_learners} learners",
            rho.len()
        )));
    }
    let mut sum = 0.0;
    for (i, w) in rho.iter().enumerate() {
        if !w.is_finite() || *w < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "selection weight {w} at position {i} is invalid"
            )));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "selection weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Draws a learner index from the selection distribution.
pub fn choose_learner(rho: &[f64], rng: &mut ChaCha8Rng) -> Result<usize> {
    check_rho(rho, rho.len())?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in rho.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding left a sliver at the top; the draw belongs to the last
    // non-zero weight.
    Ok(rho
        .iter()
        .rposition(|w| *w > 0.0)
        .expect("weights sum to one"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn parsing_round_trips() {
        for m in [RewardMechanism::Deterministic, RewardMechanism::Stochastic] {
            assert_eq!(m.name().parse::<RewardMechanism>().unwrap(), m);
        }
        for k in [MetricKind::Auc, MetricKind::MicroF1, MetricKind::RSquared] {
            assert_eq!(k.name().parse::<MetricKind>().unwrap(), k);
        }
        assert!("ensemble".parse::<RewardMechanism>().is_err());
        assert!("accuracy".parse::<MetricKind>().is_err());
    }

    #[test]
    fn metric_task_compatibility() {
        let multi = Task::MultiClass { num_classes: 3 };
        assert!(MetricKind::Auc.validate_for(Task::Binary).is_ok());
        assert!(MetricKind::Auc.validate_for(multi).is_err());
        assert!(MetricKind::MicroF1.validate_for(multi).is_ok());
        assert!(MetricKind::MicroF1.validate_for(Task::Regression).is_err());
        assert!(MetricKind::RSquared.validate_for(Task::Regression).is_ok());
        assert!(MetricKind::RSquared.validate_for(Task::Binary).is_err());
        assert_eq!(MetricKind::default_for(Task::Binary), MetricKind::Auc);
        assert_eq!(MetricKind::default_for(multi), MetricKind::MicroF1);
        assert_eq!(
            MetricKind::default_for(Task::Regression),
            MetricKind::RSquared
        );
    }

    #[test]
    fn metric_compute_dispatches() {
        let y = array![0.0, 1.0];
        let probs = Predictions::ClassProbs(array![[0.9, 0.1], [0.2, 0.8]]);
        assert_eq!(MetricKind::Auc.compute(&y.view(), &probs).unwrap(), 1.0);
        assert_eq!(MetricKind::MicroF1.compute(&y.view(), &probs).unwrap(), 1.0);
        let vals = Predictions::Values(array![0.0, 1.0]);
        assert_eq!(MetricKind::RSquared.compute(&y.view(), &vals).unwrap(), 1.0);
        assert!(MetricKind::Auc.compute(&y.view(), &vals).is_err());
    }

    #[test]
    fn ensemble_soft_votes_probabilities() {
        let y = array![0.0, 1.0];
        // One confident wrong learner, one confident right learner with more
        // spread; the vote follows the combined mean.
        let a = Predictions::ClassProbs(array![[0.1, 0.9], [0.9, 0.1]]);
        let b = Predictions::ClassProbs(array![[0.95, 0.05], [0.05, 0.95]]);
        let voted = ensemble_metric(MetricKind::Auc, &y.view(), &[a, b]).unwrap();
        // Mean scores: 0.475 vs 0.525, so the ensemble ranks correctly.
        assert_eq!(voted, 1.0);
    }

    #[test]
    fn ensemble_means_regression_values() {
        let y = array![1.0, 3.0];
        let a = Predictions::Values(array![0.0, 2.0]);
        let b = Predictions::Values(array![2.0, 4.0]);
        let r2 = ensemble_metric(MetricKind::RSquared, &y.view(), &[a, b]).unwrap();
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn rho_validation() {
        assert!(check_rho(&[0.5, 0.5], 2).is_ok());
        assert!(check_rho(&[0.5, 0.5], 3).is_err());
        assert!(check_rho(&[0.7, 0.4], 2).is_err());
        assert!(check_rho(&[-0.1, 1.1], 2).is_err());
    }

    #[test]
    fn learner_choice_follows_the_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rho = [0.2, 0.5, 0.3];
        let mut counts = [0usize; 3];
        let n = 20_000;
        for _ in 0..n {
            counts[choose_learner(&rho, &mut rng).unwrap()] += 1;
        }
        for (c, w) in counts.iter().zip(rho.iter()) {
            let freq = *c as f64 / n as f64;
            assert!((freq - w).abs() < 0.02, "freq {freq} vs weight {w}");
        }
    }

    #[test]
    fn degenerate_rho_always_picks_the_single_learner() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for _ in 0..100 {
            assert_eq!(choose_learner(&[0.0, 1.0, 0.0], &mut rng).unwrap(), 1);
        }
    }
}
