//! Column-wise z-scoring shared by the base learners and the sampling policy.

use ndarray::{Array1, Array2, ArrayView2};

/// Per-feature standardiser: subtract the mean, divide by the population
/// standard deviation. Features with (near) zero variance are mapped to zero
/// instead of blowing up.
#[derive(Debug, Clone)]
pub struct FeatureScaler {
    means: Array1<f64>,
    stds: Array1<f64>,
}

const MIN_STD: f64 = 1e-12;

impl FeatureScaler {
    /// Learns the column statistics of `x`.
    pub fn fit(x: &ArrayView2<f64>) -> FeatureScaler {
        let n = x.nrows().max(1) as f64;
        let d = x.ncols();
        let mut means = Array1::zeros(d);
        let mut stds = Array1::zeros(d);
        for j in 0..d {
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            stds[j] = var.sqrt();
        }
        FeatureScaler { means, stds }
    }

    /// Applies the learned statistics to `x` (any row count, same columns).
    pub fn transform(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), x.ncols()));
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                out[[i, j]] = if self.stds[j] < MIN_STD {
                    0.0
                } else {
                    (x[[i, j]] - self.means[j]) / self.stds[j]
                };
            }
        }
        out
    }

    pub fn fit_transform(x: &ArrayView2<f64>) -> (FeatureScaler, Array2<f64>) {
        let scaler = FeatureScaler::fit(x);
        let out = scaler.transform(x);
        (scaler, out)
    }

    pub fn means(&self) -> &Array1<f64> {
        &self.means
    }

    pub fn stds(&self) -> &Array1<f64> {
        &self.stds
    }
}
