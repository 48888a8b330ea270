//! Classical splitting baselines: uniform random and class-stratified.

use std::str::FromStr;

use ndarray::ArrayView1;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::split::Split;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Random,
    Stratified,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Stratified => "stratified",
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<BaselineKind> {
        match s {
            "random" => Ok(BaselineKind::Random),
            "stratified" => Ok(BaselineKind::Stratified),
            other => Err(Error::InvalidConfig(format!(
                "unknown baseline '{other}'; expected random or stratified"
            ))),
        }
    }
}

fn check_ratio(target_ratio: f64) -> Result<()> {
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target train ratio must lie strictly between 0 and 1, got {target_ratio}"
        )));
    }
    Ok(())
}

/// Uniformly random split: shuffles all indices and sends the first
/// `round(ratio * n)` (kept within `1..n`) to the train side.
pub fn random_split(
    n_samples: usize,
    target_ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Split> {
    check_ratio(target_ratio)?;
    if n_samples < 2 {
        return Err(Error::InvalidData(
            "need at least two samples to split".into(),
        ));
    }
    let n_train =
        ((target_ratio * n_samples as f64).round() as usize).clamp(1, n_samples - 1);
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(rng);
    let mut mask = vec![false; n_samples];
    for i in &order[..n_train] {
        mask[*i] = true;
    }
    Split::from_train_mask(&mask)
}

/// Class-stratified split: reproduces the target ratio inside every class.
///
/// The total train count is `round(ratio * n)`; per-class counts are
/// apportioned by largest remainder and kept within `1..count`, so every
/// class appears on both sides. Classes with a single sample make that
/// impossible and are rejected.
pub fn stratified_split(
    targets: &ArrayView1<f64>,
    num_classes: usize,
    target_ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Split> {
    check_ratio(target_ratio)?;
    let n = targets.len();
    if n < 2 {
        return Err(Error::InvalidData(
            "need at least two samples to split".into(),
        ));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, y) in targets.iter().enumerate() {
        if *y < 0.0 || y.fract() != 0.0 || (*y as usize) >= num_classes {
            return Err(Error::InvalidData(format!(
                "target {y} at row {} is not a class in 0..{num_classes}",
                i + 1
            )));
        }
        by_class[*y as usize].push(i);
    }
    if let Some(class) = by_class.iter().position(|idx| idx.len() == 1) {
        return Err(Error::InvalidData(format!(
            "class {class} has a single sample and cannot sit on both sides"
        )));
    }
    let present = by_class.iter().filter(|idx| !idx.is_empty()).count();

    let n_target = ((target_ratio * n as f64).round() as usize).clamp(1, n - 1);
    let lo: usize = present;
    let hi: usize = n - present;
    if n_target < lo || n_target > hi {
        return Err(Error::InvalidConfig(format!(
            "cannot place {n_target} of {n} samples in train while keeping \
             every class on both sides (feasible range {lo}..={hi})"
        )));
    }

    // Largest-remainder apportionment of n_target across classes, with the
    // per-class bounds 1..count enforced.
    let mut quota: Vec<usize> = Vec::with_capacity(num_classes);
    let mut remainder: Vec<f64> = Vec::with_capacity(num_classes);
    for idx in &by_class {
        if idx.is_empty() {
            quota.push(0);
            remainder.push(-1.0);
            continue;
        }
        let ideal = n_target as f64 * idx.len() as f64 / n as f64;
        let base = (ideal.floor() as usize).clamp(1, idx.len() - 1);
        quota.push(base);
        remainder.push(ideal - ideal.floor());
    }
    let mut assigned: usize = quota.iter().sum();
    while assigned < n_target {
        // Raise the class with the largest remainder that still has room;
        // ties go to the lowest class index, so scan in reverse (`max_by`
        // keeps the last of equal maxima).
        let candidate = (0..num_classes)
            .rev()
            .filter(|c| !by_class[*c].is_empty() && quota[*c] < by_class[*c].len() - 1)
            .max_by(|a, b| remainder[*a].partial_cmp(&remainder[*b]).unwrap())
            .ok_or_else(|| {
                Error::InvalidConfig("stratification cannot reach the train count".into())
            })?;
        quota[candidate] += 1;
        remainder[candidate] -= 1.0;
        assigned += 1;
    }
    while assigned > n_target {
        let candidate = (0..num_classes)
            .filter(|c| quota[*c] > 1)
            .min_by(|a, b| remainder[*a].partial_cmp(&remainder[*b]).unwrap())
            .ok_or_else(|| {
                Error::InvalidConfig("stratification cannot reach the train count".into())
            })?;
        quota[candidate] -= 1;
        remainder[candidate] += 1.0;
        assigned -= 1;
    }

    let mut mask = vec![false; n];
    for (class, idx) in by_class.iter().enumerate() {
        let mut pool = idx.clone();
        pool.shuffle(rng);
        for i in &pool[..quota[class]] {
            mask[*i] = true;
        }
    }
    Split::from_train_mask(&mask)
}

/// Baseline split over a dataset. Stratification needs class labels and is
/// rejected for regression targets.
pub fn baseline_split(
    dataset: &Dataset,
    kind: BaselineKind,
    target_ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Split> {
    match kind {
        BaselineKind::Random => random_split(dataset.n_samples(), target_ratio, rng),
        BaselineKind::Stratified => {
            let num_classes = dataset.task().num_classes().ok_or_else(|| {
                Error::InvalidConfig(
                    "stratified baseline needs class labels, not regression targets"
                        .into(),
                )
            })?;
            stratified_split(
                &dataset.targets().view(),
                num_classes,
                target_ratio,
                rng,
            )
        }
    }
}
