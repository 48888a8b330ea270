//! Ridge regression solved in closed form via the normal equations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scaler::FeatureScaler;

#[derive(Debug, Clone, Copy)]
pub struct RidgeConfig {
    /// L2 penalty on the weights. Zero gives ordinary least squares and fails
    /// on singular designs.
    pub l2: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig { l2: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct RidgeModel {
    scaler: FeatureScaler,
    weights: Array1<f64>,
    intercept: f64,
}

pub(super) fn fit(
    cfg: &RidgeConfig,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<RidgeModel> {
    if cfg.l2 < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "ridge: l2 must be non-negative, got {}",
            cfg.l2
        )));
    }
    let (scaler, z) = FeatureScaler::fit_transform(&x);
    let d = z.ncols();
    let y_mean = y.sum() / y.len() as f64;
    let y_centered = y.mapv(|v| v - y_mean);

    // Standardised features have zero column means, so the intercept
    // decouples: solve (Z^T Z + l2 I) w = Z^T (y - mean(y)).
    let mut gram = z.t().dot(&z);
    for i in 0..d {
        gram[[i, i]] += cfg.l2;
    }
    let rhs = z.t().dot(&y_centered);
    let weights = cholesky_solve(&gram, &rhs)?;

    Ok(RidgeModel {
        scaler,
        weights,
        intercept: y_mean,
    })
}

impl RidgeModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let z = self.scaler.transform(&x);
        z.dot(&self.weights) + self.intercept
    }
}

/// Solves `a x = b` for symmetric positive definite `a` via a Cholesky
/// factorisation `a = L L^T` followed by two triangular solves.
fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::InvalidData(
                        "normal equations are not positive definite; \
                         the design is singular, increase l2"
                            .into(),
                    ));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }

    // Forward solve L v = b.
    let mut v = Array1::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * v[k];
        }
        v[i] = sum / l[[i, i]];
    }
    // Backward solve L^T x = v.
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut sum = v[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    Ok(x)
}
