//! Seeded synthetic datasets for tests, benchmarks, and demos.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, TaskHint};
use crate::error::{Error, Result};
use crate::seeds::standard_normal;

fn feature_names(n_informative: usize, n_distractors: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..n_informative).map(|i| format!("inf{i}")).collect();
    names.extend((0..n_distractors).map(|i| format!("noise{i}")));
    names
}

fn index_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Binary classification with two Gaussian clusters.
///
/// Informative features sit at `-class_sep / 2` for class 0 and
/// `+class_sep / 2` for class 1 with unit noise; distractor features are pure
/// standard normal. Rows are shuffled so classes interleave.
pub fn imbalanced_clusters(
    n_samples: usize,
    positive_fraction: f64,
    n_informative: usize,
    n_distractors: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_samples < 4 {
        return Err(Error::InvalidConfig(
            "need at least four samples for a synthetic dataset".into(),
        ));
    }
    if n_informative == 0 {
        return Err(Error::InvalidConfig(
            "need at least one informative feature".into(),
        ));
    }
    if !(positive_fraction > 0.0 && positive_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "positive fraction must lie strictly between 0 and 1, got {positive_fraction}"
        )));
    }
    if !(class_sep.is_finite() && class_sep >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "class separation must be a finite non-negative number, got {class_sep}"
        )));
    }

    let n_pos = ((positive_fraction * n_samples as f64).round() as usize)
        .clamp(1, n_samples - 1);
    let d = n_informative + n_distractors;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut features = Array2::<f64>::zeros((n_samples, d));
    let mut targets = Array1::<f64>::zeros(n_samples);
    for i in 0..n_samples {
        let label = if i < n_pos { 1.0 } else { 0.0 };
        let center = (label - 0.5) * class_sep;
        targets[i] = label;
        for j in 0..d {
            let mean = if j < n_informative { center } else { 0.0 };
            features[[i, j]] = mean + standard_normal(&mut rng);
        }
    }

    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut rng);
    let shuffled_features =
        Array2::from_shape_fn((n_samples, d), |(i, j)| features[[order[i], j]]);
    let shuffled_targets = Array1::from_shape_fn(n_samples, |i| targets[order[i]]);

    Dataset::from_parts(
        index_ids(n_samples),
        feature_names(n_informative, n_distractors),
        shuffled_features,
        shuffled_targets,
        TaskHint::Binary,
    )
}

/// Balanced two-cluster binary classification.
pub fn clusters(
    n_samples: usize,
    n_informative: usize,
    n_distractors: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    imbalanced_clusters(n_samples, 0.5, n_informative, n_distractors, class_sep, seed)
}

/// Binary classification mixing scale contrast with a location offset.
///
/// The first two informative features are zero-mean for both classes but
/// drawn at `wide_scale` standard deviations for class 0 and `narrow_scale`
/// for class 1, so class 1 forms a tight band inside a broad class-0 cloud.
/// The remaining informative features carry the plain per-class offset of
/// [`clusters`] with gap `linear_sep`. Threshold learners read the band
/// dimensions, linear models read the offset dimensions, so learner families
/// of different shapes land in a similar score range and an ensemble gains
/// from combining them.
pub fn banded_clusters(
    n_samples: usize,
    n_informative: usize,
    n_distractors: usize,
    wide_scale: f64,
    narrow_scale: f64,
    linear_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_samples < 4 {
        return Err(Error::InvalidConfig(
            "need at least four samples for a synthetic dataset".into(),
        ));
    }
    if n_informative < 3 {
        return Err(Error::InvalidConfig(
            "the banded layout needs at least three informative features".into(),
        ));
    }
    for scale in [wide_scale, narrow_scale] {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "band scales must be finite positive numbers, got {scale}"
            )));
        }
    }
    if !(linear_sep.is_finite() && linear_sep >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "class separation must be a finite non-negative number, got {linear_sep}"
        )));
    }

    let d = n_informative + n_distractors;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut features = Array2::<f64>::zeros((n_samples, d));
    let mut targets = Array1::<f64>::zeros(n_samples);
    for i in 0..n_samples {
        let label = if i < n_samples / 2 { 1.0 } else { 0.0 };
        targets[i] = label;
        let band = if label > 0.5 { narrow_scale } else { wide_scale };
        for j in 0..d {
            let z = standard_normal(&mut rng);
            features[[i, j]] = match j {
                0 | 1 => band * z,
                _ if j < n_informative => (label - 0.5) * linear_sep + z,
                _ => z,
            };
        }
    }

    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut rng);
    let shuffled_features =
        Array2::from_shape_fn((n_samples, d), |(i, j)| features[[order[i], j]]);
    let shuffled_targets = Array1::from_shape_fn(n_samples, |i| targets[order[i]]);

    Dataset::from_parts(
        index_ids(n_samples),
        feature_names(n_informative, n_distractors),
        shuffled_features,
        shuffled_targets,
        TaskHint::Binary,
    )
}

/// Regression targets from a random linear model with Gaussian noise.
pub fn linear_regression(
    n_samples: usize,
    n_features: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_samples < 4 {
        return Err(Error::InvalidConfig(
            "need at least four samples for a synthetic dataset".into(),
        ));
    }
    if n_features == 0 {
        return Err(Error::InvalidConfig("need at least one feature".into()));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise level must be a finite non-negative number, got {noise_std}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..n_features).map(|_| standard_normal(&mut rng)).collect();
    let intercept = standard_normal(&mut rng);

    let mut features = Array2::<f64>::zeros((n_samples, n_features));
    let mut targets = Array1::<f64>::zeros(n_samples);
    for i in 0..n_samples {
        let mut y = intercept;
        for j in 0..n_features {
            let x = standard_normal(&mut rng);
            features[[i, j]] = x;
            y += weights[j] * x;
        }
        targets[i] = y + noise_std * standard_normal(&mut rng);
    }

    let names = (0..n_features).map(|j| format!("x{j}")).collect();
    Dataset::from_parts(
        index_ids(n_samples),
        names,
        features,
        targets,
        TaskHint::Regression,
    )
}

/// Multi-class variant of [`clusters`]: class `c` centers its informative
/// features at `c * class_sep`.
pub fn multiclass_clusters(
    n_samples: usize,
    num_classes: usize,
    n_informative: usize,
    n_distractors: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 3 {
        return Err(Error::InvalidConfig(
            "multi-class generation needs at least three classes".into(),
        ));
    }
    if n_samples < 2 * num_classes {
        return Err(Error::InvalidConfig(
            "need at least two samples per class".into(),
        ));
    }
    if n_informative == 0 {
        return Err(Error::InvalidConfig(
            "need at least one informative feature".into(),
        ));
    }
    if !(class_sep.is_finite() && class_sep >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "class separation must be a finite non-negative number, got {class_sep}"
        )));
    }

    let d = n_informative + n_distractors;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::<f64>::zeros((n_samples, d));
    let mut targets = Array1::<f64>::zeros(n_samples);
    for i in 0..n_samples {
        let label = i % num_classes;
        targets[i] = label as f64;
        for j in 0..d {
            let mean = if j < n_informative {
                label as f64 * class_sep
            } else {
                0.0
            };
            features[[i, j]] = mean + standard_normal(&mut rng);
        }
    }

    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut rng);
    let shuffled_features =
        Array2::from_shape_fn((n_samples, d), |(i, j)| features[[order[i], j]]);
    let shuffled_targets = Array1::from_shape_fn(n_samples, |i| targets[order[i]]);

    Dataset::from_parts(
        index_ids(n_samples),
        feature_names(n_informative, n_distractors),
        shuffled_features,
        shuffled_targets,
        TaskHint::MultiClass,
    )
}
