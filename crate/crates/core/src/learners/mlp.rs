//! A single-hidden-layer perceptron with a tanh hidden activation, trained
//! full-batch with RMSprop. Classification uses a softmax head with
//! cross-entropy, regression a linear head with squared error.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{one_hot, softmax_rows_inplace, Predictions};
use crate::error::{Error, Result};
use crate::optim::{RmsProp, RmsPropConfig};
use crate::scaler::FeatureScaler;

#[derive(Debug, Clone, Copy)]
pub struct MlpConfig {
    pub hidden: usize,
    /// Fixed number of full-batch epochs; there is no early stopping.
    pub epochs: usize,
    pub lr: f64,
    /// RMSprop decay for the squared-gradient average.
    pub decay: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 64,
            epochs: 200,
            lr: 1e-3,
            decay: 0.9,
        }
    }
}

/// Offsets of the four parameter blocks inside the flat parameter vector:
/// input weights, hidden bias, output weights, output bias.
#[derive(Debug, Clone, Copy)]
struct Layout {
    d: usize,
    h: usize,
    o: usize,
}

impl Layout {
    fn total(&self) -> usize {
        self.d * self.h + self.h + self.h * self.o + self.o
    }

    fn split<'a>(&self, p: &'a [f64]) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>, ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (w1, rest) = p.split_at(self.d * self.h);
        let (b1, rest) = rest.split_at(self.h);
        let (w2, b2) = rest.split_at(self.h * self.o);
        (
            ArrayView2::from_shape((self.d, self.h), w1).unwrap(),
            ArrayView1::from(b1),
            ArrayView2::from_shape((self.h, self.o), w2).unwrap(),
            ArrayView1::from(b2),
        )
    }
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    scaler: FeatureScaler,
    layout: Layout,
    params: Vec<f64>,
    num_classes: Option<usize>,
}

/// Forward pass returning the hidden activations and the (pre-softmax)
/// output.
fn forward(layout: &Layout, params: &[f64], z: &ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (w1, b1, w2, b2) = layout.split(params);
    let mut hidden = z.dot(&w1) + &b1;
    hidden.mapv_inplace(f64::tanh);
    let out = hidden.dot(&w2) + &b2;
    (hidden, out)
}

/// Loss and flat gradient at `params`. `y_hot` is one-hot for classification
/// and a single-column target matrix for regression.
fn loss_and_grads(
    layout: &Layout,
    params: &[f64],
    z: &ArrayView2<f64>,
    y_hot: &Array2<f64>,
    classify: bool,
) -> (f64, Vec<f64>) {
    let n = z.nrows() as f64;
    let (hidden, out) = forward(layout, params, z);
    let (loss, d_out) = if classify {
        let mut probs = out;
        softmax_rows_inplace(&mut probs);
        let loss = y_hot
            .iter()
            .zip(probs.iter())
            .map(|(y, p)| if *y > 0.0 { -p.max(1e-300).ln() } else { 0.0 })
            .sum::<f64>()
            / n;
        (loss, (probs - y_hot) / n)
    } else {
        let diff = &out - y_hot;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
        (loss, 2.0 * diff / n)
    };

    let (_, _, w2, _) = layout.split(params);
    let g_w2 = hidden.t().dot(&d_out);
    let g_b2 = d_out.sum_axis(ndarray::Axis(0));
    let d_hidden = d_out.dot(&w2.t());
    let d_pre = d_hidden * hidden.mapv(|a| 1.0 - a * a);
    let g_w1 = z.t().dot(&d_pre);
    let g_b1 = d_pre.sum_axis(ndarray::Axis(0));

    let mut grads = Vec::with_capacity(layout.total());
    grads.extend(g_w1.iter());
    grads.extend(g_b1.iter());
    grads.extend(g_w2.iter());
    grads.extend(g_b2.iter());
    (loss, grads)
}

pub(super) fn fit(
    cfg: &MlpConfig,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    num_classes: Option<usize>,
    seed: u64,
) -> Result<MlpModel> {
    if cfg.hidden == 0 {
        return Err(Error::InvalidConfig("mlp: hidden must be >= 1".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidConfig("mlp: epochs must be >= 1".into()));
    }
    let (scaler, z) = FeatureScaler::fit_transform(&x);
    let layout = Layout {
        d: z.ncols(),
        h: cfg.hidden,
        o: num_classes.unwrap_or(1),
    };
    let y_hot = match num_classes {
        Some(c) => one_hot(&y, c),
        None => {
            let mut m = Array2::zeros((y.len(), 1));
            m.column_mut(0).assign(&y);
            m
        }
    };

    // Uniform init in +-1/sqrt(fan_in) for weights, zeros for biases, drawn
    // in a fixed order so the same seed always builds the same network.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; layout.total()];
    let bound1 = 1.0 / (layout.d as f64).sqrt();
    for p in params.iter_mut().take(layout.d * layout.h) {
        *p = rng.gen_range(-bound1..bound1);
    }
    let bound2 = 1.0 / (layout.h as f64).sqrt();
    let w2_start = layout.d * layout.h + layout.h;
    for p in params
        .iter_mut()
        .skip(w2_start)
        .take(layout.h * layout.o)
    {
        *p = rng.gen_range(-bound2..bound2);
    }

    let mut opt = RmsProp::new(
        RmsPropConfig {
            lr: cfg.lr,
            decay: cfg.decay,
            eps: 1e-8,
            ..RmsPropConfig::default()
        },
        layout.total(),
    );
    let classify = num_classes.is_some();
    for _ in 0..cfg.epochs {
        let (_, grads) = loss_and_grads(&layout, &params, &z.view(), &y_hot, classify);
        opt.step(&mut params, &grads)?;
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("mlp: parameters diverged".into()));
    }

    Ok(MlpModel {
        scaler,
        layout,
        params,
        num_classes,
    })
}

impl MlpModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Predictions> {
        let z = self.scaler.transform(&x);
        let (_, out) = forward(&self.layout, &self.params, &z.view());
        match self.num_classes {
            Some(_) => {
                let mut probs = out;
                softmax_rows_inplace(&mut probs);
                Ok(Predictions::ClassProbs(probs))
            }
            None => Ok(Predictions::Values(out.column(0).to_owned())),
        }
    }
}
