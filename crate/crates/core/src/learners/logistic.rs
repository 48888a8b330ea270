//! Multinomial logistic regression trained by full-batch gradient descent.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{one_hot, softmax_rows_inplace};
use crate::error::{Error, Result};
use crate::scaler::FeatureScaler;

#[derive(Debug, Clone, Copy)]
pub struct LogisticConfig {
    /// Gradient descent step size on standardised features.
    pub lr: f64,
    /// L2 penalty on the weights (the bias is unpenalised).
    pub l2: f64,
    /// Epoch cap; training stops earlier once the gradient is flat.
    pub max_epochs: usize,
    /// Convergence threshold on the largest absolute gradient entry.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lr: 0.5,
            l2: 1e-4,
            max_epochs: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticModel {
    scaler: FeatureScaler,
    /// Weight matrix, features x classes.
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// Cross-entropy loss plus L2 penalty at the given parameters; used to verify
/// the analytic gradient.
#[cfg(test)]
fn loss(
    z: &Array2<f64>,
    y_hot: &Array2<f64>,
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    l2: f64,
) -> f64 {
    let mut probs = z.dot(weights) + bias;
    softmax_rows_inplace(&mut probs);
    let n = z.nrows() as f64;
    let ce: f64 = y_hot
        .iter()
        .zip(probs.iter())
        .map(|(y, p)| if *y > 0.0 { -p.ln() } else { 0.0 })
        .sum::<f64>()
        / n;
    ce + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

pub(super) fn fit(
    cfg: &LogisticConfig,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    num_classes: usize,
) -> Result<LogisticModel> {
    let (scaler, z) = FeatureScaler::fit_transform(&x);
    let y_hot = one_hot(&y, num_classes);
    let n = z.nrows() as f64;
    let mut weights = Array2::zeros((z.ncols(), num_classes));
    let mut bias = Array1::zeros(num_classes);

    for _ in 0..cfg.max_epochs {
        let mut probs = z.dot(&weights) + &bias;
        softmax_rows_inplace(&mut probs);
        let residual = (probs - &y_hot) / n;
        let grad_w = z.t().dot(&residual) + &(cfg.l2 * &weights);
        let grad_b = residual.sum_axis(Axis(0));
        let max_grad = grad_w
            .iter()
            .chain(grad_b.iter())
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if max_grad < cfg.tol {
            break;
        }
        weights.scaled_add(-cfg.lr, &grad_w);
        bias.scaled_add(-cfg.lr, &grad_b);
    }

    if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "logistic regression diverged; lower the learning rate".into(),
        ));
    }
    Ok(LogisticModel {
        scaler,
        weights,
        bias,
    })
}

impl LogisticModel {
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let z = self.scaler.transform(&x);
        let mut probs = z.dot(&self.weights) + &self.bias;
        softmax_rows_inplace(&mut probs);
        probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::argmax_rows;
    use ndarray::array;

    fn separable() -> (Array2<f64>, Array1<f64>) {
        let x = array![[-2.0], [-1.5], [-1.0], [1.0], [1.5], [2.0]];
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        (x, y)
    }

    #[test]
    fn separates_linearly_separable_data() {
        let (x, y) = separable();
        let model = fit(&LogisticConfig::default(), x.view(), y.view(), 2).unwrap();
        let probs = model.predict_proba(x.view());
        let pred = argmax_rows(&probs.view());
        let want: Vec<usize> = y.iter().map(|v| *v as usize).collect();
        assert_eq!(pred, want);
        // Positive-class probability grows with the feature.
        assert!(probs[[0, 1]] < probs[[5, 1]]);
    }

    #[test]
    fn symmetric_data_gives_even_probabilities() {
        let x = array![[-1.0], [1.0], [-1.0], [1.0]];
        let y = array![0.0, 0.0, 1.0, 1.0];
        let model = fit(&LogisticConfig::default(), x.view(), y.view(), 2).unwrap();
        let probs = model.predict_proba(x.view());
        for row in probs.rows() {
            assert!((row[0] - 0.5).abs() < 1e-6, "{row}");
        }
    }

    #[test]
    fn fits_three_separated_clusters() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (c, center) in [-6.0, 0.0, 6.0].iter().enumerate() {
            for i in 0..8 {
                xs.push([center + (i as f64) * 0.1, center - (i as f64) * 0.05]);
                ys.push(c as f64);
            }
        }
        let x = Array2::from_shape_vec((24, 2), xs.concat()).unwrap();
        let y = Array1::from(ys);
        let model = fit(&LogisticConfig::default(), x.view(), y.view(), 3).unwrap();
        let pred = argmax_rows(&model.predict_proba(x.view()).view());
        let want: Vec<usize> = y.iter().map(|v| *v as usize).collect();
        assert_eq!(pred, want);
    }

    #[test]
    fn fitting_is_deterministic() {
        let (x, y) = separable();
        let a = fit(&LogisticConfig::default(), x.view(), y.view(), 2).unwrap();
        let b = fit(&LogisticConfig::default(), x.view(), y.view(), 2).unwrap();
        assert_eq!(a.predict_proba(x.view()), b.predict_proba(x.view()));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (x, y) = separable();
        let (_, z) = FeatureScaler::fit_transform(&x.view());
        let y_hot = one_hot(&y.view(), 2);
        let l2 = 1e-2;
        let weights = array![[0.3], [0.0]].t().to_owned();
        let weights = weights.into_shape_with_order((1, 2)).unwrap();
        let bias = array![0.1, -0.2];

        let n = z.nrows() as f64;
        let mut probs = z.dot(&weights) + &bias;
        softmax_rows_inplace(&mut probs);
        let residual = (probs - &y_hot) / n;
        let grad_w = z.t().dot(&residual) + &(l2 * &weights);
        let grad_b = residual.sum_axis(Axis(0));

        let h = 1e-6;
        for (idx, analytic) in grad_w.indexed_iter() {
            let mut up = weights.clone();
            up[idx] += h;
            let mut down = weights.clone();
            down[idx] -= h;
            let numeric =
                (loss(&z, &y_hot, &up, &bias, l2) - loss(&z, &y_hot, &down, &bias, l2))
                    / (2.0 * h);
            assert!((analytic - numeric).abs() < 1e-8, "{analytic} vs {numeric}");
        }
        for (idx, analytic) in grad_b.indexed_iter() {
            let mut up = bias.clone();
            up[idx] += h;
            let mut down = bias.clone();
            down[idx] -= h;
            let numeric = (loss(&z, &y_hot, &weights, &up, l2)
                - loss(&z, &y_hot, &weights, &down, l2))
                / (2.0 * h);
            assert!((analytic - numeric).abs() < 1e-8, "{analytic} vs {numeric}");
        }
    }
}
