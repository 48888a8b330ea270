//! CART decision trees: Gini impurity for classification, squared error for
//! regression. Split search is exhaustive and fully deterministic.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::Predictions;
use crate::error::{Error, Result};
use crate::scaler::FeatureScaler;

#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    pub max_depth: usize,
    /// Minimum number of samples in each leaf.
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 8,
            min_leaf: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub(super) enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class distribution for classification, a single mean for regression.
    Leaf { value: Vec<f64> },
}

/// A grown tree over already-standardised features.
#[derive(Debug, Clone)]
pub(super) struct RawTree {
    pub(super) nodes: Vec<Node>,
}

impl RawTree {
    pub(super) fn predict_row(&self, row: ArrayView1<f64>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { value } => return value,
            }
        }
    }
}

struct Grower<'a> {
    z: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    cfg: TreeConfig,
    num_classes: Option<usize>,
    /// How many features to consider per split; equals the feature count when
    /// no subsampling is requested.
    features_per_split: usize,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<'a> Grower<'a> {
    /// Impurity of a sample set: weighted Gini (`n - sum c^2 / n`) for
    /// classification, sum of squared errors for regression. Both are
    /// additive over children, so split search minimises the child sum.
    fn impurity(&self, indices: &[usize]) -> f64 {
        let n = indices.len() as f64;
        match self.num_classes {
            Some(c) => {
                let mut counts = vec![0.0f64; c];
                for i in indices {
                    counts[self.y[*i] as usize] += 1.0;
                }
                n - counts.iter().map(|v| v * v).sum::<f64>() / n
            }
            None => {
                let sum: f64 = indices.iter().map(|i| self.y[*i]).sum();
                let sumsq: f64 = indices.iter().map(|i| self.y[*i].powi(2)).sum();
                sumsq - sum * sum / n
            }
        }
    }

    fn leaf_value(&self, indices: &[usize]) -> Vec<f64> {
        let n = indices.len() as f64;
        match self.num_classes {
            Some(c) => {
                let mut counts = vec![0.0f64; c];
                for i in indices {
                    counts[self.y[*i] as usize] += 1.0;
                }
                counts.iter_mut().for_each(|v| *v /= n);
                counts
            }
            None => vec![indices.iter().map(|i| self.y[*i]).sum::<f64>() / n],
        }
    }

    /// Features to scan at this node, ascending. Subsampling draws without
    /// replacement, then sorts so ties still resolve to the lowest index.
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.z.ncols();
        if self.features_per_split >= d {
            return (0..d).collect();
        }
        let rng = self.rng.as_mut().expect("subsampling requires an rng");
        let mut all: Vec<usize> = (0..d).collect();
        all.shuffle(rng);
        let mut chosen: Vec<usize> = all[..self.features_per_split].to_vec();
        chosen.sort_unstable();
        chosen
    }

    /// Scans candidate thresholds of one feature with an incremental sweep,
    /// updating `best`. Later candidates only replace a strictly better
    /// score, so the earliest feature and threshold win ties.
    fn scan_feature(&self, feature: usize, indices: &[usize], best: &mut Option<BestSplit>) {
        let n = indices.len();
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|a, b| {
            self.z[[*a, feature]]
                .partial_cmp(&self.z[[*b, feature]])
                .unwrap()
        });

        match self.num_classes {
            Some(c) => {
                let mut left = vec![0.0f64; c];
                let mut right = vec![0.0f64; c];
                for i in &order {
                    right[self.y[*i] as usize] += 1.0;
                }
                let mut left_sq = 0.0;
                let mut right_sq: f64 = right.iter().map(|v| v * v).sum();
                for split_at in 1..n {
                    let moved = order[split_at - 1];
                    let class = self.y[moved] as usize;
                    left_sq += 2.0 * left[class] + 1.0;
                    right_sq += -2.0 * right[class] + 1.0;
                    left[class] += 1.0;
                    right[class] -= 1.0;

                    let lo = self.z[[order[split_at - 1], feature]];
                    let hi = self.z[[order[split_at], feature]];
                    if lo == hi {
                        continue;
                    }
                    if split_at < self.cfg.min_leaf || n - split_at < self.cfg.min_leaf {
                        continue;
                    }
                    let nl = split_at as f64;
                    let nr = (n - split_at) as f64;
                    let score = (nl - left_sq / nl) + (nr - right_sq / nr);
                    self.consider(feature, lo, hi, score, best);
                }
            }
            None => {
                let mut left_sum = 0.0;
                let mut left_sq = 0.0;
                let mut right_sum: f64 = order.iter().map(|i| self.y[*i]).sum();
                let mut right_sq: f64 = order.iter().map(|i| self.y[*i].powi(2)).sum();
                for split_at in 1..n {
                    let v = self.y[order[split_at - 1]];
                    left_sum += v;
                    left_sq += v * v;
                    right_sum -= v;
                    right_sq -= v * v;

                    let lo = self.z[[order[split_at - 1], feature]];
                    let hi = self.z[[order[split_at], feature]];
                    if lo == hi {
                        continue;
                    }
                    if split_at < self.cfg.min_leaf || n - split_at < self.cfg.min_leaf {
                        continue;
                    }
                    let nl = split_at as f64;
                    let nr = (n - split_at) as f64;
                    let score =
                        (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
                    self.consider(feature, lo, hi, score, best);
                }
            }
        }
    }

    fn consider(
        &self,
        feature: usize,
        lo: f64,
        hi: f64,
        score: f64,
        best: &mut Option<BestSplit>,
    ) {
        let threshold = lo + (hi - lo) / 2.0;
        // Guard against midpoints rounding onto the upper value, which would
        // leave the right side empty under the `<=` routing rule.
        let threshold = if threshold >= hi { lo } else { threshold };
        let better = match best {
            Some(b) => score < b.score,
            None => true,
        };
        if better {
            *best = Some(BestSplit {
                feature,
                threshold,
                score,
            });
        }
    }

    fn grow_node(&mut self, indices: &[usize], depth: usize) -> usize {
        let parent_impurity = self.impurity(indices);
        let splittable = depth < self.cfg.max_depth
            && indices.len() >= 2 * self.cfg.min_leaf
            && parent_impurity > 1e-12;

        // Zero-gain splits are allowed: parity-style targets have no
        // first-level impurity decrease yet become separable one level down.
        let best = if splittable {
            let mut best = None;
            for feature in self.candidate_features() {
                self.scan_feature(feature, indices, &mut best);
            }
            best.filter(|b| b.score <= parent_impurity + 1e-9)
        } else {
            None
        };

        match best {
            Some(b) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|i| self.z[[**i, b.feature]] <= b.threshold);
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf { value: Vec::new() });
                let left = self.grow_node(&left_idx, depth + 1);
                let right = self.grow_node(&right_idx, depth + 1);
                self.nodes[slot] = Node::Internal {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                };
                slot
            }
            None => {
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf {
                    value: self.leaf_value(indices),
                });
                slot
            }
        }
    }
}

/// Grows a tree on standardised features. `features_per_split` below the
/// feature count enables per-split subsampling driven by `rng`.
pub(super) fn grow_raw(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    indices: &[usize],
    cfg: TreeConfig,
    num_classes: Option<usize>,
    features_per_split: usize,
    rng: Option<ChaCha8Rng>,
) -> RawTree {
    let mut grower = Grower {
        z,
        y,
        cfg,
        num_classes,
        features_per_split,
        rng,
        nodes: Vec::new(),
    };
    let root = grower.grow_node(indices, 0);
    debug_assert_eq!(root, 0);
    RawTree {
        nodes: grower.nodes,
    }
}

pub(super) fn check_config(cfg: &TreeConfig) -> Result<()> {
    if cfg.max_depth == 0 {
        return Err(Error::InvalidConfig("tree: max_depth must be >= 1".into()));
    }
    if cfg.min_leaf == 0 {
        return Err(Error::InvalidConfig("tree: min_leaf must be >= 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TreeModel {
    scaler: FeatureScaler,
    tree: RawTree,
    num_classes: Option<usize>,
}

pub(super) fn fit(
    cfg: &TreeConfig,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    num_classes: Option<usize>,
) -> Result<TreeModel> {
    check_config(cfg)?;
    let (scaler, z) = FeatureScaler::fit_transform(&x);
    let indices: Vec<usize> = (0..z.nrows()).collect();
    let tree = grow_raw(z.view(), y, &indices, *cfg, num_classes, z.ncols(), None);
    Ok(TreeModel {
        scaler,
        tree,
        num_classes,
    })
}

impl TreeModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Predictions> {
        let z = self.scaler.transform(&x);
        match self.num_classes {
            Some(c) => {
                let mut probs = Array2::zeros((z.nrows(), c));
                for (i, row) in z.rows().into_iter().enumerate() {
                    let value = self.tree.predict_row(row);
                    for (j, v) in value.iter().enumerate() {
                        probs[[i, j]] = *v;
                    }
                }
                Ok(Predictions::ClassProbs(probs))
            }
            None => {
                let values = z
                    .rows()
                    .into_iter()
                    .map(|row| self.tree.predict_row(row)[0])
                    .collect::<Array1<f64>>();
                Ok(Predictions::Values(values))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fits_a_step_function_exactly() {
        let x = array![[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]];
        let y = array![0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let model = fit(&TreeConfig::default(), x.view(), y.view(), None).unwrap();
        let pred = model.predict(x.view()).unwrap();
        let values = pred.values().unwrap();
        for (p, t) in values.iter().zip(y.iter()) {
            assert_eq!(p, t);
        }
    }

    #[test]
    fn fits_xor_with_two_levels() {
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..3 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                rows.push([a, b]);
                ys.push(if a != b { 1.0 } else { 0.0 });
            }
        }
        let x = Array2::from_shape_vec((12, 2), rows.concat()).unwrap();
        let y = Array1::from(ys.clone());
        let model = fit(&TreeConfig::default(), x.view(), y.view(), Some(2)).unwrap();
        let pred = model.predict(x.view()).unwrap();
        let probs = pred.class_probs().unwrap();
        for (row, want) in probs.rows().into_iter().zip(ys.iter()) {
            assert_eq!(row[1], *want);
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_resolve_to_the_lowest_feature_index() {
        // Both features separate the classes perfectly and identically.
        let x = array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        let y = array![0.0, 0.0, 1.0, 1.0];
        let model = fit(&TreeConfig::default(), x.view(), y.view(), Some(2)).unwrap();
        match &model.tree.nodes[0] {
            Node::Internal { feature, .. } => assert_eq!(*feature, 0),
            Node::Leaf { .. } => panic!("expected a split at the root"),
        }
    }

    #[test]
    fn min_leaf_blocks_small_splits() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![0.0, 0.0, 1.0];
        // 3 samples cannot produce two leaves of >= 2 samples.
        let model = fit(&TreeConfig::default(), x.view(), y.view(), Some(2)).unwrap();
        assert_eq!(model.tree.nodes.len(), 1);
        let pred = model.predict(x.view()).unwrap();
        let probs = pred.class_probs().unwrap();
        assert!((probs[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn depth_limit_is_respected() {
        let x = Array2::from_shape_vec((8, 1), (0..8).map(|v| v as f64).collect())
            .unwrap();
        let y = array![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let cfg = TreeConfig {
            max_depth: 1,
            min_leaf: 1,
        };
        let model = fit(&cfg, x.view(), y.view(), Some(2)).unwrap();
        // Depth 1 means at most one internal node and two leaves.
        assert!(model.tree.nodes.len() <= 3);
    }

    #[test]
    fn constant_targets_become_a_single_leaf() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![5.0, 5.0, 5.0, 5.0];
        let model = fit(&TreeConfig::default(), x.view(), y.view(), None).unwrap();
        assert_eq!(model.tree.nodes.len(), 1);
        let pred = model.predict(array![[9.0]].view()).unwrap();
        assert_eq!(pred.values().unwrap()[0], 5.0);
    }

    #[test]
    fn fitting_is_deterministic() {
        let x = array![[1.0, 4.0], [2.0, 3.0], [3.0, 2.0], [4.0, 1.0], [5.0, 0.0]];
        let y = array![0.0, 0.0, 1.0, 1.0, 1.0];
        let a = fit(&TreeConfig::default(), x.view(), y.view(), Some(2)).unwrap();
        let b = fit(&TreeConfig::default(), x.view(), y.view(), Some(2)).unwrap();
        let pa = a.predict(x.view()).unwrap();
        let pb = b.predict(x.view()).unwrap();
        assert_eq!(pa.class_probs().unwrap(), pb.class_probs().unwrap());
    }

    #[test]
    fn config_validation() {
        let x = array![[1.0], [2.0]];
        let y = array![0.0, 1.0];
        let bad = TreeConfig {
            max_depth: 0,
            min_leaf: 2,
        };
        assert!(fit(&bad, x.view(), y.view(), Some(2)).is_err());
    }
}
