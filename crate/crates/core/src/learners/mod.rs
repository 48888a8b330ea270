//! Seeded base learners fitted on the train side of a candidate split and
//! scored on the test side.
//!
//! Every learner standardises features on its own training data, trains a
//! fixed, documented procedure and produces either class probabilities or
//! real-valued predictions. Given the same inputs and seed, fitting is
//! bit-reproducible.

mod forest;
mod logistic;
mod mlp;
mod ridge;
mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub use forest::{ForestConfig, ForestModel};
pub use logistic::{LogisticConfig, LogisticModel};
pub use mlp::{MlpConfig, MlpModel};
pub use ridge::{RidgeConfig, RidgeModel};
pub use tree::{TreeConfig, TreeModel};

use crate::dataset::Task;
use crate::error::{Error, Result};

/// The output of a fitted learner on a feature matrix.
#[derive(Debug, Clone)]
pub enum Predictions {
    /// Row-stochastic matrix of class probabilities, one row per sample.
    ClassProbs(Array2<f64>),
    /// One real value per sample.
    Values(Array1<f64>),
}

impl Predictions {
    pub fn class_probs(&self) -> Result<&Array2<f64>> {
        match self {
            Predictions::ClassProbs(p) => Ok(p),
            Predictions::Values(_) => Err(Error::InvalidData(
                "expected class probabilities, got regression values".into(),
            )),
        }
    }

    pub fn values(&self) -> Result<&Array1<f64>> {
        match self {
            Predictions::Values(v) => Ok(v),
            Predictions::ClassProbs(_) => Err(Error::InvalidData(
                "expected regression values, got class probabilities".into(),
            )),
        }
    }
}

/// The available base learner families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnerKind {
    Logistic,
    Ridge,
    Tree,
    Forest,
    Mlp,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] = [
        LearnerKind::Logistic,
        LearnerKind::Ridge,
        LearnerKind::Tree,
        LearnerKind::Forest,
        LearnerKind::Mlp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Logistic => "logistic",
            LearnerKind::Ridge => "ridge",
            LearnerKind::Tree => "tree",
            LearnerKind::Forest => "forest",
            LearnerKind::Mlp => "mlp",
        }
    }

    /// Whether this learner can handle the given task.
    pub fn supports(&self, task: Task) -> bool {
        match self {
            LearnerKind::Logistic => task.is_classification(),
            LearnerKind::Ridge => !task.is_classification(),
            LearnerKind::Tree | LearnerKind::Forest | LearnerKind::Mlp => true,
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<LearnerKind> {
        LearnerKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown learner '{s}'; expected one of {}",
                    LearnerKind::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

/// A learner family plus its hyperparameters, ready to fit.
#[derive(Debug, Clone)]
pub enum LearnerSpec {
    Logistic(LogisticConfig),
    Ridge(RidgeConfig),
    Tree(TreeConfig),
    Forest(ForestConfig),
    Mlp(MlpConfig),
}

impl LearnerSpec {
    /// The spec with default hyperparameters for a learner family.
    pub fn with_defaults(kind: LearnerKind) -> LearnerSpec {
        match kind {
            LearnerKind::Logistic => LearnerSpec::Logistic(LogisticConfig::default()),
            LearnerKind::Ridge => LearnerSpec::Ridge(RidgeConfig::default()),
            LearnerKind::Tree => LearnerSpec::Tree(TreeConfig::default()),
            LearnerKind::Forest => LearnerSpec::Forest(ForestConfig::default()),
            LearnerKind::Mlp => LearnerSpec::Mlp(MlpConfig::default()),
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerSpec::Logistic(_) => LearnerKind::Logistic,
            LearnerSpec::Ridge(_) => LearnerKind::Ridge,
            LearnerSpec::Tree(_) => LearnerKind::Tree,
            LearnerSpec::Forest(_) => LearnerKind::Forest,
            LearnerSpec::Mlp(_) => LearnerKind::Mlp,
        }
    }

    /// Fits this learner on raw (unscaled) training features and targets.
    ///
    /// `seed` feeds learners with internal randomness (forest bootstraps, MLP
    /// initialisation); deterministic learners ignore it.
    pub fn fit(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        task: Task,
        seed: u64,
    ) -> Result<FittedLearner> {
        if !self.kind().supports(task) {
            return Err(Error::InvalidConfig(format!(
                "learner '{}' does not support {} tasks",
                self.kind(),
                if task.is_classification() {
                    "classification"
                } else {
                    "regression"
                }
            )));
        }
        if x.nrows() != y.len() {
            return Err(Error::InvalidData(format!(
                "{} rows vs {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidData("cannot fit on zero samples".into()));
        }
        let num_classes = task.num_classes();
        if let Some(c) = num_classes {
            check_train_labels(&y, c)?;
        }
        match self {
            LearnerSpec::Logistic(cfg) => Ok(FittedLearner::Logistic(
                logistic::fit(cfg, x, y, num_classes.unwrap())?,
            )),
            LearnerSpec::Ridge(cfg) => Ok(FittedLearner::Ridge(ridge::fit(cfg, x, y)?)),
            LearnerSpec::Tree(cfg) => Ok(FittedLearner::Tree(tree::fit(
                cfg,
                x,
                y,
                num_classes,
            )?)),
            LearnerSpec::Forest(cfg) => Ok(FittedLearner::Forest(forest::fit(
                cfg,
                x,
                y,
                num_classes,
                seed,
            )?)),
            LearnerSpec::Mlp(cfg) => Ok(FittedLearner::Mlp(mlp::fit(
                cfg,
                x,
                y,
                num_classes,
                seed,
            )?)),
        }
    }
}

/// A fitted model of any learner family.
#[derive(Debug, Clone)]
pub enum FittedLearner {
    Logistic(LogisticModel),
    Ridge(RidgeModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl FittedLearner {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Predictions> {
        match self {
            FittedLearner::Logistic(m) => {
                Ok(Predictions::ClassProbs(m.predict_proba(x)))
            }
            FittedLearner::Ridge(m) => Ok(Predictions::Values(m.predict(x))),
            FittedLearner::Tree(m) => m.predict(x),
            FittedLearner::Forest(m) => m.predict(x),
            FittedLearner::Mlp(m) => m.predict(x),
        }
    }
}

/// Validates integer class labels on a training split: in range and at least
/// two distinct classes, otherwise there is nothing to discriminate.
fn check_train_labels(y: &ArrayView1<f64>, num_classes: usize) -> Result<()> {
    let mut seen = vec![false; num_classes];
    for (i, v) in y.iter().enumerate() {
        if *v < 0.0 || v.fract() != 0.0 || (*v as usize) >= num_classes {
            return Err(Error::InvalidData(format!(
                "label {v} at train row {} is not a class in 0..{num_classes}",
                i + 1
            )));
        }
        seen[*v as usize] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(Error::InvalidData(
            "train side contains a single class".into(),
        ));
    }
    Ok(())
}

/// Row-wise softmax with the usual max-shift for stability.
pub(crate) fn softmax_rows_inplace(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// One-hot encoding of integer labels.
pub(crate) fn one_hot(y: &ArrayView1<f64>, num_classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((y.len(), num_classes));
    for (i, v) in y.iter().enumerate() {
        out[[i, *v as usize]] = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kind_parsing_round_trips() {
        for kind in LearnerKind::ALL {
            assert_eq!(kind.name().parse::<LearnerKind>().unwrap(), kind);
        }
        assert!("boost".parse::<LearnerKind>().is_err());
    }

    #[test]
    fn task_support_matrix() {
        let clf = Task::Binary;
        let reg = Task::Regression;
        assert!(LearnerKind::Logistic.supports(clf));
        assert!(!LearnerKind::Logistic.supports(reg));
        assert!(!LearnerKind::Ridge.supports(clf));
        assert!(LearnerKind::Ridge.supports(reg));
        for k in [LearnerKind::Tree, LearnerKind::Forest, LearnerKind::Mlp] {
            assert!(k.supports(clf) && k.supports(reg));
        }
    }

    #[test]
    fn fit_rejects_task_mismatch() {
        let x = array![[0.0], [1.0]];
        let y = array![0.0, 1.0];
        let spec = LearnerSpec::with_defaults(LearnerKind::Ridge);
        let err = spec.fit(x.view(), y.view(), Task::Binary, 0).unwrap_err();
        assert!(err.to_string().contains("ridge"), "{err}");
    }

    #[test]
    fn fit_rejects_single_class_training_data() {
        let x = array![[0.0], [1.0]];
        let y = array![1.0, 1.0];
        let spec = LearnerSpec::with_defaults(LearnerKind::Tree);
        let err = spec.fit(x.view(), y.view(), Task::Binary, 0).unwrap_err();
        assert!(err.to_string().contains("single class"), "{err}");
    }

    #[test]
    fn softmax_rows_are_stochastic() {
        let mut a = array![[1.0, 2.0, 3.0], [1000.0, 1000.0, 1000.0]];
        softmax_rows_inplace(&mut a);
        for row in a.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| v.is_finite() && *v > 0.0));
        }
        assert!((a[[1, 0]] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_marks_the_label_column() {
        let y = array![2.0, 0.0];
        let h = one_hot(&y.view(), 3);
        assert_eq!(h, array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
    }
}
