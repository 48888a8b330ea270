//! Random forest: bootstrapped CART trees with per-split feature
//! subsampling, each tree driven by its own seeded RNG stream.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::{check_config, grow_raw, RawTree, TreeConfig};
use super::Predictions;
use crate::error::{Error, Result};
use crate::scaler::FeatureScaler;
use crate::seeds::child_seed;

#[derive(Debug, Clone, Copy)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 16,
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    scaler: FeatureScaler,
    trees: Vec<RawTree>,
    num_classes: Option<usize>,
}

/// Features considered per split: `floor(sqrt(d))` for classification,
/// `d / 3` for regression, at least one either way.
fn features_per_split(d: usize, num_classes: Option<usize>) -> usize {
    let k = match num_classes {
        Some(_) => (d as f64).sqrt().floor() as usize,
        None => d / 3,
    };
    k.clamp(1, d)
}

pub(super) fn fit(
    cfg: &ForestConfig,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    num_classes: Option<usize>,
    seed: u64,
) -> Result<ForestModel> {
    if cfg.n_trees == 0 {
        return Err(Error::InvalidConfig("forest: n_trees must be >= 1".into()));
    }
    check_config(&cfg.tree)?;
    let (scaler, z) = FeatureScaler::fit_transform(&x);
    let n = z.nrows();
    let k = features_per_split(z.ncols(), num_classes);

    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, t as u64));
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow_raw(
                z.view(),
                y,
                &bootstrap,
                cfg.tree,
                num_classes,
                k,
                Some(rng),
            )
        })
        .collect();

    Ok(ForestModel {
        scaler,
        trees,
        num_classes,
    })
}

impl ForestModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Predictions> {
        let z = self.scaler.transform(&x);
        let n_trees = self.trees.len() as f64;
        match self.num_classes {
            Some(c) => {
                let mut probs = Array2::zeros((z.nrows(), c));
                for (i, row) in z.rows().into_iter().enumerate() {
                    for tree in &self.trees {
                        for (j, v) in tree.predict_row(row).iter().enumerate() {
                            probs[[i, j]] += v;
                        }
                    }
                }
                probs /= n_trees;
                Ok(Predictions::ClassProbs(probs))
            }
            None => {
                let values = z
                    .rows()
                    .into_iter()
                    .map(|row| {
                        self.trees
                            .iter()
                            .map(|t| t.predict_row(row)[0])
                            .sum::<f64>()
                            / n_trees
                    })
                    .collect::<Array1<f64>>();
                Ok(Predictions::Values(values))
            }
        }
    }

    #[cfg(test)]
    pub(super) fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn clusters() -> (Array2<f64>, Array1<f64>) {
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for i in 0..10 {
            rows.push([-3.0 + 0.1 * i as f64, -3.0]);
            ys.push(0.0);
            rows.push([3.0 + 0.1 * i as f64, 3.0]);
            ys.push(1.0);
        }
        (
            Array2::from_shape_vec((20, 2), rows.concat()).unwrap(),
            Array1::from(ys),
        )
    }

    #[test]
    fn separates_clusters_and_returns_probabilities() {
        let (x, y) = clusters();
        let model = fit(&ForestConfig::default(), x.view(), y.view(), Some(2), 7)
            .unwrap();
        assert_eq!(model.n_trees(), 16);
        let pred = model.predict(x.view()).unwrap();
        let probs = pred.class_probs().unwrap();
        for (row, want) in probs.rows().into_iter().zip(y.iter()) {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            let hard = if row[1] > 0.5 { 1.0 } else { 0.0 };
            assert_eq!(hard, *want);
        }
    }

    #[test]
    fn same_seed_reproduces_different_seed_varies() {
        // Noisy labels, so bootstrap differences show up in the leaves.
        let x = Array2::from_shape_vec((16, 1), (0..16).map(|v| v as f64).collect())
            .unwrap();
        let y = array![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let cfg = ForestConfig::default();
        let a = fit(&cfg, x.view(), y.view(), Some(2), 7).unwrap();
        let b = fit(&cfg, x.view(), y.view(), Some(2), 7).unwrap();
        let c = fit(&cfg, x.view(), y.view(), Some(2), 8).unwrap();
        let pa = a.predict(x.view()).unwrap().class_probs().unwrap().clone();
        let pb = b.predict(x.view()).unwrap().class_probs().unwrap().clone();
        let pc = c.predict(x.view()).unwrap().class_probs().unwrap().clone();
        assert_eq!(pa, pb);
        assert_ne!(pa, pc);
    }

    #[test]
    fn regression_averages_tree_means() {
        let x = Array2::from_shape_vec((12, 1), (0..12).map(|v| v as f64).collect())
            .unwrap();
        let y = x.column(0).mapv(|v| 2.0 * v);
        let model = fit(&ForestConfig::default(), x.view(), y.view(), None, 3).unwrap();
        let pred = model.predict(x.view()).unwrap();
        let values = pred.values().unwrap();
        // Tree means cannot extrapolate, but interior points should be close.
        for i in 3..9 {
            assert!((values[i] - y[i]).abs() < 4.0, "{} vs {}", values[i], y[i]);
        }
    }

    #[test]
    fn feature_subsample_sizes() {
        assert_eq!(features_per_split(9, Some(2)), 3);
        assert_eq!(features_per_split(10, Some(2)), 3);
        assert_eq!(features_per_split(1, Some(2)), 1);
        assert_eq!(features_per_split(9, None), 3);
        assert_eq!(features_per_split(2, None), 1);
    }

    #[test]
    fn rejects_zero_trees() {
        let (x, y) = clusters();
        let cfg = ForestConfig {
            n_trees: 0,
            ..ForestConfig::default()
        };
        assert!(fit(&cfg, x.view(), y.view(), Some(2), 1).is_err());
    }
}
