//! Train/test split assignments over a fixed-order dataset.

use std::fmt;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Which side of the split a sample lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assignment {
    Train,
    Test,
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assignment::Train => "train",
            Assignment::Test => "test",
        })
    }
}

/// A complete assignment of every sample to train or test.
///
/// Construction fails if either side is empty; downstream code can therefore
/// assume both sides are populated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    assignments: Vec<Assignment>,
}

impl Split {
    pub fn new(assignments: Vec<Assignment>) -> Result<Split> {
        let n_train = assignments
            .iter()
            .filter(|a| **a == Assignment::Train)
            .count();
        if assignments.is_empty() {
            return Err(Error::DegenerateSplit("no samples".into()));
        }
        if n_train == 0 {
            return Err(Error::DegenerateSplit("empty train side".into()));
        }
        if n_train == assignments.len() {
            return Err(Error::DegenerateSplit("empty test side".into()));
        }
        Ok(Split { assignments })
    }

    /// Builds a split from a boolean mask where `true` means train.
    pub fn from_train_mask(mask: &[bool]) -> Result<Split> {
        Split::new(
            mask.iter()
                .map(|m| if *m { Assignment::Train } else { Assignment::Test })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices_of(Assignment::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices_of(Assignment::Test)
    }

    fn indices_of(&self, side: Assignment) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == side)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_train(&self) -> usize {
        self.train_indices().len()
    }

    pub fn n_test(&self) -> usize {
        self.len() - self.n_train()
    }

    /// Fraction of samples assigned to train.
    pub fn train_ratio(&self) -> f64 {
        self.n_train() as f64 / self.len() as f64
    }

    /// Gathers the rows of `x` for each side, preserving dataset order.
    pub fn partition_rows(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let train = x.select(Axis(0), &self.train_indices());
        let test = x.select(Axis(0), &self.test_indices());
        (train, test)
    }

    /// Gathers the entries of `y` for each side, preserving dataset order.
    pub fn partition_values(&self, y: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
        let gather = |idx: Vec<usize>| Array1::from_iter(idx.into_iter().map(|i| y[i]));
        (
            gather(self.train_indices()),
            gather(self.test_indices()),
        )
    }

    /// Per-class sample counts `(train, test)` for integer-labelled targets.
    pub fn class_counts(
        &self,
        targets: &Array1<f64>,
        num_classes: usize,
    ) -> (Vec<usize>, Vec<usize>) {
        let mut train = vec![0usize; num_classes];
        let mut test = vec![0usize; num_classes];
        for (a, y) in self.assignments.iter().zip(targets.iter()) {
            let c = *y as usize;
            match a {
                Assignment::Train => train[c] += 1,
                Assignment::Test => test[c] += 1,
            }
        }
        (train, test)
    }
}
