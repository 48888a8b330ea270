//! The trainable sampling policy.
//!
//! A recurrent network reads the dataset one sample at a time and emits, per
//! sample, the probability of assigning it to the train side. The hidden
//! state only absorbs samples assigned to train: a test assignment leaves the
//! carried state untouched, so the state summarises the training subset built
//! so far. Training uses score-function (REINFORCE) gradients of the episode
//! return plus differentiable ratio and class-balance penalties, all
//! backpropagated through the recurrence by hand.

mod gru;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gru::GruParams;
use gru::{cell_backward, cell_forward, head_backward, head_forward, StepState};

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::optim::{RmsProp, RmsPropConfig};
use crate::regularizers::{iid_penalty_soft_with_grad, ratio_gap_with_grad};
use crate::split::{Assignment, Split};

/// Emitted probabilities are clamped to this interval so log-probabilities
/// and their gradients stay finite.
pub const PROB_FLOOR: f64 = 1e-6;
pub const PROB_CEIL: f64 = 1.0 - 1e-6;

/// Learning rate of the ratio pretraining loop.
const PRETRAIN_LR: f64 = 0.02;
/// Pretraining stops once the decoded train fraction is this close to the
/// target ratio (widened to one sample's worth on small datasets).
const PRETRAIN_TOL: f64 = 0.01;
/// How far the mean probability may sit from the target ratio at the end of
/// pretraining. Looser than the fraction tolerance: the mean only anchors
/// the later ratio penalty, it does not decide assignments.
const PRETRAIN_MEAN_TOL: f64 = 0.05;

/// Scale factors of the three loss terms: the score-function term, the
/// ratio penalty and the distribution-matching penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossScales {
    pub alpha: f64,
    pub gamma: f64,
    pub psi: f64,
}

impl Default for LossScales {
    fn default() -> Self {
        LossScales {
            alpha: 1.0,
            gamma: 0.9,
            psi: 0.1,
        }
    }
}

/// The three loss components of one update, already scaled.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub policy: f64,
    pub ratio: f64,
    pub iid: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.policy + self.ratio + self.iid
    }
}

/// How the distribution-matching penalty enters the loss.
#[derive(Debug, Clone, Copy)]
pub enum IidTerm<'a> {
    /// Differentiable soft-histogram penalty over class labels
    /// (classification).
    Soft {
        labels: &'a [usize],
        num_classes: usize,
    },
    /// A pre-computed divergence value that is only reported in the loss;
    /// its influence on learning comes through return shaping instead
    /// (regression).
    External(f64),
}

/// One roll-out of the policy over the dataset: per-sample assignments,
/// probabilities, the summed log-probability of the taken actions, and the
/// cached activations needed for the backward pass.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub actions: Vec<Assignment>,
    pub probs: Vec<f64>,
    pub log_prob: f64,
    caches: Vec<StepCache>,
}

impl Trajectory {
    pub fn train_ratio(&self) -> f64 {
        let train = self
            .actions
            .iter()
            .filter(|a| **a == Assignment::Train)
            .count();
        train as f64 / self.actions.len() as f64
    }

    pub fn to_split(&self) -> Result<Split> {
        Split::new(self.actions.clone())
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    g_prev: Array1<f64>,
    state: StepState,
    p_raw: f64,
}

enum Decision<'a> {
    Sample(&'a mut ChaCha8Rng),
    Greedy,
    Forced(&'a [Assignment]),
}

/// The sampling policy: a gated recurrent cell with a two-way head.
#[derive(Debug, Clone)]
pub struct Policy {
    params: GruParams,
}

impl Policy {
    /// A freshly initialised policy for inputs of width `input_dim`.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Result<Policy> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidConfig(
                "policy needs input_dim >= 1 and hidden >= 1".into(),
            ));
        }
        Ok(Policy {
            params: GruParams::init(input_dim, hidden, rng),
        })
    }

    pub fn from_params(params: GruParams) -> Result<Policy> {
        params.check_shapes()?;
        params.check_finite()?;
        Ok(Policy { params })
    }

    pub fn params(&self) -> &GruParams {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.params.hidden()
    }

    pub fn n_params(&self) -> usize {
        self.params.n_params()
    }

    fn run_forward(&self, inputs: &ArrayView2<f64>, mut decision: Decision) -> Result<Trajectory> {
        let m = inputs.nrows();
        if m == 0 {
            return Err(Error::InvalidData("no samples to assign".into()));
        }
        if inputs.ncols() != self.input_dim() {
            return Err(Error::InvalidData(format!(
                "inputs have width {}, policy expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        if let Decision::Forced(actions) = &decision {
            if actions.len() != m {
                return Err(Error::InvalidData(format!(
                    "{} forced actions for {m} samples",
                    actions.len()
                )));
            }
        }

        let mut g = Array1::zeros(self.hidden());
        let mut actions = Vec::with_capacity(m);
        let mut probs = Vec::with_capacity(m);
        let mut caches = Vec::with_capacity(m);
        let mut log_prob = 0.0;

        for t in 0..m {
            let e = inputs.row(t);
            let state = cell_forward(&self.params, &e, &g.view());
            let p_raw = head_forward(&self.params, &state.h.view());
            if !p_raw.is_finite() {
                return Err(Error::NonFinite(format!(
                    "policy probability at step {t}"
                )));
            }
            let p = p_raw.clamp(PROB_FLOOR, PROB_CEIL);
            let action = match &mut decision {
                Decision::Sample(rng) => {
                    if rng.gen::<f64>() < p {
                        Assignment::Train
                    } else {
                        Assignment::Test
                    }
                }
                // An exact tie goes to the train side.
                Decision::Greedy => {
                    if p >= 0.5 {
                        Assignment::Train
                    } else {
                        Assignment::Test
                    }
                }
                Decision::Forced(forced) => forced[t],
            };
            log_prob += match action {
                Assignment::Train => p.ln(),
                Assignment::Test => (1.0 - p).ln(),
            };
            if action == Assignment::Train {
                let next = state.h.clone();
                caches.push(StepCache {
                    g_prev: std::mem::replace(&mut g, next),
                    state,
                    p_raw,
                });
            } else {
                caches.push(StepCache {
                    g_prev: g.clone(),
                    state,
                    p_raw,
                });
            }
            probs.push(p);
            actions.push(action);
        }

        Ok(Trajectory {
            actions,
            probs,
            log_prob,
            caches,
        })
    }

    /// Rolls the policy out stochastically, drawing each assignment from its
    /// emitted probability.
    pub fn sample_trajectory(
        &self,
        inputs: &ArrayView2<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Trajectory> {
        self.run_forward(inputs, Decision::Sample(rng))
    }

    /// Deterministic roll-out taking the more likely assignment at each step.
    pub fn greedy_decode(&self, inputs: &ArrayView2<f64>) -> Result<Trajectory> {
        self.run_forward(inputs, Decision::Greedy)
    }

    /// Rolls the policy out along a fixed action sequence, computing the
    /// probabilities and log-probability the current parameters assign to it.
    pub fn evaluate_actions(
        &self,
        inputs: &ArrayView2<f64>,
        actions: &[Assignment],
    ) -> Result<Trajectory> {
        self.run_forward(inputs, Decision::Forced(actions))
    }

    /// Per-step loss gradient at the (clamped) probabilities, plus the scaled
    /// loss values.
    fn per_step_grads(
        &self,
        traj: &Trajectory,
        shaped_return: f64,
        scales: LossScales,
        target_ratio: f64,
        iid: Option<&IidTerm<'_>>,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        if !shaped_return.is_finite() {
            return Err(Error::NonFinite("episode return".into()));
        }
        let m = traj.probs.len();
        let mut dp = vec![0.0; m];

        // Score-function term: -alpha * R * sum_t log pi(a_t).
        let policy_loss = -scales.alpha * shaped_return * traj.log_prob;
        for t in 0..m {
            let p = traj.probs[t];
            let dlogp = match traj.actions[t] {
                Assignment::Train => 1.0 / p,
                Assignment::Test => -1.0 / (1.0 - p),
            };
            dp[t] = -scales.alpha * shaped_return * dlogp;
        }

        let (gap, ratio_grad) = ratio_gap_with_grad(&traj.probs, target_ratio)?;
        let ratio_loss = scales.gamma * gap;
        for t in 0..m {
            dp[t] += scales.gamma * ratio_grad[t];
        }

        let iid_loss = match iid {
            Some(IidTerm::Soft {
                labels,
                num_classes,
            }) => {
                let (kl, grad) =
                    iid_penalty_soft_with_grad(&traj.probs, labels, *num_classes)?;
                for t in 0..m {
                    dp[t] += scales.psi * grad[t];
                }
                scales.psi * kl
            }
            Some(IidTerm::External(value)) => scales.psi * value,
            None => 0.0,
        };

        Ok((
            LossBreakdown {
                policy: policy_loss,
                ratio: ratio_loss,
                iid: iid_loss,
            },
            dp,
        ))
    }

    /// Backpropagates per-step probability gradients through the recurrence.
    ///
    /// The hidden-state chain follows the carry rule: at a train step the
    /// downstream gradient joins the cell output, at a test step it bypasses
    /// the cell (the carried state was passed through unchanged) while the
    /// cell still contributes through its own read of the previous state.
    fn backward(
        &self,
        inputs: &ArrayView2<f64>,
        traj: &Trajectory,
        dp: &[f64],
    ) -> GruParams {
        let mut grads = GruParams::zeros(self.input_dim(), self.hidden());
        let mut dg_next = Array1::zeros(self.hidden());

        for t in (0..traj.caches.len()).rev() {
            let cache = &traj.caches[t];
            // The forward clamp is treated as identity here: a saturated
            // probability keeps receiving (sigmoid-attenuated) pressure, so
            // the regularizers can pull it back instead of freezing it.
            let mut dh = head_backward(
                &self.params,
                &cache.state.h.view(),
                cache.p_raw,
                dp[t],
                &mut grads,
            );
            let e = inputs.row(t);
            match traj.actions[t] {
                Assignment::Train => {
                    dh += &dg_next;
                    dg_next = cell_backward(
                        &self.params,
                        &e,
                        &cache.g_prev.view(),
                        &cache.state,
                        &dh,
                        &mut grads,
                    );
                }
                Assignment::Test => {
                    let dg_cell = cell_backward(
                        &self.params,
                        &e,
                        &cache.g_prev.view(),
                        &cache.state,
                        &dh,
                        &mut grads,
                    );
                    dg_next += &dg_cell;
                }
            }
        }
        grads
    }

    /// Loss and parameter gradients of one sampled episode.
    pub fn reinforce_loss_and_grads(
        &self,
        inputs: &ArrayView2<f64>,
        traj: &Trajectory,
        shaped_return: f64,
        scales: LossScales,
        target_ratio: f64,
        iid: Option<IidTerm<'_>>,
    ) -> Result<(LossBreakdown, GruParams)> {
        let (loss, dp) =
            self.per_step_grads(traj, shaped_return, scales, target_ratio, iid.as_ref())?;
        let grads = self.backward(inputs, traj, &dp);
        grads.check_finite()?;
        Ok((loss, grads))
    }

    /// The loss the current parameters assign to a fixed action sequence;
    /// the numeric counterpart of [`Policy::reinforce_loss_and_grads`] used
    /// to verify gradients by finite differences.
    pub fn loss_for_actions(
        &self,
        inputs: &ArrayView2<f64>,
        actions: &[Assignment],
        shaped_return: f64,
        scales: LossScales,
        target_ratio: f64,
        iid: Option<IidTerm<'_>>,
    ) -> Result<LossBreakdown> {
        let traj = self.evaluate_actions(inputs, actions)?;
        let (loss, _) =
            self.per_step_grads(&traj, shaped_return, scales, target_ratio, iid.as_ref())?;
        Ok(loss)
    }

    /// Applies one RMSprop step to the parameters.
    pub fn apply_gradients(&mut self, opt: &mut RmsProp, grads: &GruParams) -> Result<()> {
        let mut flat = self.params.to_flat();
        opt.step(&mut flat, &grads.to_flat())?;
        self.params.assign_from_flat(&flat)?;
        self.params.check_finite()
    }

    /// Initialises the policy at a random split of the target ratio.
    ///
    /// Draws a uniformly random assignment with `round(target_ratio * m)`
    /// train samples and fits the emitted probabilities towards it by binary
    /// cross-entropy with RMSprop, using an all-train carry. The targets are
    /// smoothed to `(1 + r) / 2` and `r / 2` instead of one and zero, so the
    /// fitted probabilities straddle one half with moderate logits (a later
    /// reward signal can still move individual samples across) and their
    /// mean starts at the target ratio. Stops once the decoded train
    /// fraction and the mean probability are close to `target_ratio`;
    /// otherwise restores the best parameters seen and warns.
    pub fn pretrain(
        &mut self,
        inputs: &ArrayView2<f64>,
        target_ratio: f64,
        max_passes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<PretrainOutcome> {
        if !(target_ratio > 0.0 && target_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target train ratio must lie strictly between 0 and 1, got {target_ratio}"
            )));
        }
        let m = inputs.nrows();
        let all_train = vec![Assignment::Train; m];
        let n_train = ((target_ratio * m as f64).round() as usize).clamp(1, m.max(2) - 1);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(rng);
        let t_hi = (1.0 + target_ratio) / 2.0;
        let t_lo = target_ratio / 2.0;
        let mut targets = vec![t_lo; m];
        for i in &order[..n_train] {
            targets[*i] = t_hi;
        }

        let frac_tol = PRETRAIN_TOL.max(1.0 / m as f64);
        let mut opt = RmsProp::new(
            RmsPropConfig {
                lr: PRETRAIN_LR,
                ..RmsPropConfig::default()
            },
            self.n_params(),
        );
        let mut best_score = f64::INFINITY;
        let mut best_gap = f64::INFINITY;
        let mut best_flat = self.params.to_flat();

        for pass in 1..=max_passes {
            let traj = self.evaluate_actions(inputs, &all_train)?;
            let mean: f64 = traj.probs.iter().sum::<f64>() / m as f64;
            let frac =
                traj.probs.iter().filter(|p| **p >= 0.5).count() as f64 / m as f64;
            let frac_gap = (frac - target_ratio).abs();
            let mean_gap = (mean - target_ratio).abs();
            let score = (frac_gap / frac_tol).max(mean_gap / PRETRAIN_MEAN_TOL);
            if score < best_score {
                best_score = score;
                best_gap = frac_gap;
                best_flat = self.params.to_flat();
            }
            if frac_gap <= frac_tol && mean_gap <= PRETRAIN_MEAN_TOL {
                return Ok(PretrainOutcome {
                    passes: pass,
                    converged: true,
                    gap: frac_gap,
                });
            }
            // Binary cross-entropy against the smoothed per-sample targets.
            let dp: Vec<f64> = traj
                .probs
                .iter()
                .zip(targets.iter())
                .map(|(p, t)| -(t / p - (1.0 - t) / (1.0 - p)) / m as f64)
                .collect();
            let grads = self.backward(inputs, &traj, &dp);
            self.apply_gradients(&mut opt, &grads)?;
        }

        log::warn!(
            "ratio pretraining did not converge in {max_passes} passes; \
             keeping the closest parameters (gap {best_gap:.4})"
        );
        self.params.assign_from_flat(&best_flat)?;
        Ok(PretrainOutcome {
            passes: max_passes,
            converged: false,
            gap: best_gap,
        })
    }

    pub fn to_checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            format_version: CHECKPOINT_VERSION,
            input_dim: self.input_dim(),
            hidden: self.hidden(),
            params: self.params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint())
            .map_err(|e| Error::InvalidData(format!("cannot serialise policy: {e}")))?;
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(json.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Policy> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: PolicyCheckpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::InvalidData(format!("cannot parse policy checkpoint: {e}")))?;
        Policy::try_from(ck)
    }
}

const CHECKPOINT_VERSION: u32 = 1;

/// Serializable snapshot of a policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden: usize,
    pub params: GruParams,
}

impl TryFrom<PolicyCheckpoint> for Policy {
    type Error = Error;

    fn try_from(ck: PolicyCheckpoint) -> Result<Policy> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        if ck.params.input_dim() != ck.input_dim || ck.params.hidden() != ck.hidden {
            return Err(Error::InvalidData(
                "checkpoint dimensions do not match its parameters".into(),
            ));
        }
        Policy::from_params(ck.params)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PretrainOutcome {
    pub passes: usize,
    pub converged: bool,
    /// Final distance between the decoded train fraction and the target.
    pub gap: f64,
}

/// Builds the policy's per-sample input matrix: features z-scored over the
/// whole dataset, concatenated with a target encoding (one-hot classes for
/// classification, the z-scored target for regression).
pub fn policy_inputs(dataset: &Dataset) -> Array2<f64> {
    let z = dataset.standardized_features();
    let m = dataset.n_samples();
    let d = dataset.n_features();
    match dataset.task() {
        Task::Binary | Task::MultiClass { .. } => {
            let c = dataset.task().num_classes().expect("classification");
            let mut out = Array2::zeros((m, d + c));
            out.slice_mut(ndarray::s![.., ..d]).assign(&z);
            for (i, y) in dataset.targets().iter().enumerate() {
                out[[i, d + *y as usize]] = 1.0;
            }
            out
        }
        Task::Regression => {
            let y = dataset.targets();
            let mean = y.sum() / m as f64;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
            let std = var.sqrt();
            let mut out = Array2::zeros((m, d + 1));
            out.slice_mut(ndarray::s![.., ..d]).assign(&z);
            if std >= 1e-12 {
                for (i, v) in y.iter().enumerate() {
                    out[[i, d]] = (v - mean) / std;
                }
            }
            out
        }
    }
}

/// Input width the policy needs for a dataset of `n_features` and this task.
pub fn policy_input_dim(n_features: usize, task: Task) -> usize {
    n_features + task.num_classes().unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TaskHint;
    use ndarray::array;
    use rand_chacha::rand_core::SeedableRng;

    fn small_inputs(m: usize, e: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, e), |_| rng.gen_range(-1.5..1.5))
    }

    fn small_policy(e: usize, h: usize, seed: u64) -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Policy::new(e, h, &mut rng).unwrap()
    }

    #[test]
    fn sampling_is_reproducible_per_seed() {
        let inputs = small_inputs(12, 3, 1);
        let policy = small_policy(3, 4, 2);
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let mut r3 = ChaCha8Rng::seed_from_u64(6);
        let a = policy.sample_trajectory(&inputs.view(), &mut r1).unwrap();
        let b = policy.sample_trajectory(&inputs.view(), &mut r2).unwrap();
        let c = policy.sample_trajectory(&inputs.view(), &mut r3).unwrap();
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.probs, b.probs);
        assert!(a.actions != c.actions || a.probs == c.probs);
    }

    #[test]
    fn log_prob_matches_probs_and_actions() {
        let inputs = small_inputs(10, 3, 3);
        let policy = small_policy(3, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let traj = policy.sample_trajectory(&inputs.view(), &mut rng).unwrap();
        let manual: f64 = traj
            .actions
            .iter()
            .zip(traj.probs.iter())
            .map(|(a, p)| match a {
                Assignment::Train => p.ln(),
                Assignment::Test => (1.0 - p).ln(),
            })
            .sum();
        assert!((traj.log_prob - manual).abs() < 1e-12);
    }

    #[test]
    fn test_steps_do_not_touch_the_carried_state() {
        let e = 3;
        let policy = small_policy(e, 5, 11);
        let actions = [
            Assignment::Train,
            Assignment::Test,
            Assignment::Train,
            Assignment::Test,
        ];
        let inputs = small_inputs(4, e, 12);
        let base = policy.evaluate_actions(&inputs.view(), &actions).unwrap();

        // Garbling the input of a test step changes that step's probability
        // and nothing downstream.
        let mut garbled = inputs.clone();
        garbled.row_mut(1).fill(9.0);
        let got = policy.evaluate_actions(&garbled.view(), &actions).unwrap();
        assert_eq!(got.probs[0], base.probs[0]);
        assert_ne!(got.probs[1], base.probs[1]);
        assert_eq!(got.probs[2], base.probs[2]);
        assert_eq!(got.probs[3], base.probs[3]);

        // Garbling the input of a train step changes everything downstream.
        let mut garbled = inputs.clone();
        garbled.row_mut(2).fill(9.0);
        let got = policy.evaluate_actions(&garbled.view(), &actions).unwrap();
        assert_eq!(got.probs[1], base.probs[1]);
        assert_ne!(got.probs[2], base.probs[2]);
        assert_ne!(got.probs[3], base.probs[3]);
    }

    #[test]
    fn zero_initialised_policy_decodes_all_train_on_ties() {
        let policy = Policy::from_params(GruParams::zeros(2, 3)).unwrap();
        let inputs = small_inputs(6, 2, 8);
        let traj = policy.greedy_decode(&inputs.view()).unwrap();
        assert!(traj.probs.iter().all(|p| (*p - 0.5).abs() < 1e-12));
        assert!(traj
            .actions
            .iter()
            .all(|a| *a == Assignment::Train));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = 6;
        let e = 4;
        let policy = small_policy(e, 5, 21);
        let inputs = small_inputs(m, e, 22);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let traj = policy.sample_trajectory(&inputs.view(), &mut rng).unwrap();
        let labels = [0usize, 1, 0, 1, 1, 0];
        let scales = LossScales {
            alpha: 1.0,
            gamma: 0.9,
            psi: 0.3,
        };
        let shaped_return = 0.63;
        let target_ratio = 0.7;

        for iid in [
            None,
            Some(IidTerm::Soft {
                labels: &labels,
                num_classes: 2,
            }),
            Some(IidTerm::External(0.4)),
        ] {
            let (_, grads) = policy
                .reinforce_loss_and_grads(
                    &inputs.view(),
                    &traj,
                    shaped_return,
                    scales,
                    target_ratio,
                    iid,
                )
                .unwrap();
            let flat = policy.params().to_flat();
            let grads_flat = grads.to_flat();
            let h = 1e-5;
            for i in 0..flat.len() {
                let probe = |delta: f64| {
                    let mut params = policy.params().clone();
                    let mut f = flat.clone();
                    f[i] += delta;
                    params.assign_from_flat(&f).unwrap();
                    let p = Policy::from_params(params).unwrap();
                    p.loss_for_actions(
                        &inputs.view(),
                        &traj.actions,
                        shaped_return,
                        scales,
                        target_ratio,
                        iid,
                    )
                    .unwrap()
                    .total()
                };
                let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                let denom = grads_flat[i].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (grads_flat[i] - numeric).abs() / denom <= 1e-4,
                    "param {i}: analytic {} vs numeric {numeric}",
                    grads_flat[i]
                );
            }
        }
    }

    #[test]
    fn pretraining_reaches_the_target_ratio() {
        let inputs = small_inputs(30, 4, 31);
        let mut policy = small_policy(4, 8, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let outcome = policy.pretrain(&inputs.view(), 0.7, 300, &mut rng).unwrap();
        assert!(outcome.converged, "gap {}", outcome.gap);
        let traj = policy
            .evaluate_actions(&inputs.view(), &vec![Assignment::Train; 30])
            .unwrap();
        let frac = traj.probs.iter().filter(|p| **p >= 0.5).count() as f64 / 30.0;
        assert!((frac - 0.7).abs() <= 1.0 / 30.0 + 1e-12, "fraction {frac}");
        let mean: f64 = traj.probs.iter().sum::<f64>() / 30.0;
        assert!((mean - 0.7).abs() <= 0.05, "mean {mean}");
        // The fitted probabilities straddle one half instead of collapsing
        // onto a single value.
        assert!(traj.probs.iter().any(|p| *p < 0.5));
        assert!(traj.probs.iter().any(|p| *p > 0.5));
    }

    #[test]
    fn pretraining_starts_at_a_seeded_random_split() {
        let inputs = small_inputs(24, 4, 34);
        let mut a = small_policy(4, 8, 35);
        let mut b = a.clone();
        let mut c = a.clone();
        let mut rng_a = ChaCha8Rng::seed_from_u64(36);
        let mut rng_b = ChaCha8Rng::seed_from_u64(36);
        let mut rng_c = ChaCha8Rng::seed_from_u64(37);
        a.pretrain(&inputs.view(), 0.7, 300, &mut rng_a).unwrap();
        b.pretrain(&inputs.view(), 0.7, 300, &mut rng_b).unwrap();
        c.pretrain(&inputs.view(), 0.7, 300, &mut rng_c).unwrap();
        let decode = |p: &Policy| p.greedy_decode(&inputs.view()).unwrap().actions;
        assert_eq!(decode(&a), decode(&b));
        assert_ne!(decode(&a), decode(&c));
    }

    #[test]
    fn pretraining_reports_non_convergence() {
        let inputs = small_inputs(10, 3, 41);
        let mut policy = small_policy(3, 4, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let outcome = policy.pretrain(&inputs.view(), 0.9, 1, &mut rng).unwrap();
        assert!(!outcome.converged);
        assert!(policy.pretrain(&inputs.view(), 1.0, 5, &mut rng).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        let policy = small_policy(3, 4, 51);
        policy.save(&path).unwrap();
        let loaded = Policy::load(&path).unwrap();
        assert_eq!(policy.params(), loaded.params());

        let inputs = small_inputs(8, 3, 52);
        let a = policy.greedy_decode(&inputs.view()).unwrap();
        let b = loaded.greedy_decode(&inputs.view()).unwrap();
        assert_eq!(a.actions, b.actions);
    }

    #[test]
    fn checkpoint_dimension_mismatch_is_rejected() {
        let policy = small_policy(3, 4, 61);
        let mut ck = policy.to_checkpoint();
        ck.hidden = 9;
        assert!(Policy::try_from(ck).is_err());
        let mut ck = policy.to_checkpoint();
        ck.format_version = 99;
        assert!(Policy::try_from(ck).is_err());
    }

    #[test]
    fn extreme_parameters_clamp_but_stay_finite() {
        let mut params = GruParams::zeros(2, 3);
        params.v[[0, 0]] = 1e4;
        params.v[[1, 0]] = -1e4;
        params.b_n[0] = 10.0;
        let policy = Policy::from_params(params).unwrap();
        let inputs = small_inputs(5, 2, 71);
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let traj = policy.sample_trajectory(&inputs.view(), &mut rng).unwrap();
        assert!(traj.log_prob.is_finite());
        assert!(traj.probs.iter().all(|p| (PROB_FLOOR..=PROB_CEIL).contains(p)));
        let (loss, grads) = policy
            .reinforce_loss_and_grads(
                &inputs.view(),
                &traj,
                0.5,
                LossScales::default(),
                0.5,
                None,
            )
            .unwrap();
        assert!(loss.total().is_finite());
        assert!(grads.to_flat().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn policy_inputs_encode_targets() {
        let ds = Dataset::from_parts(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into()],
            array![[1.0], [2.0], [3.0]],
            array![0.0, 1.0, 1.0],
            TaskHint::Binary,
        )
        .unwrap();
        let inputs = policy_inputs(&ds);
        assert_eq!(inputs.dim(), (3, 3));
        assert_eq!(inputs[[0, 1]], 1.0);
        assert_eq!(inputs[[0, 2]], 0.0);
        assert_eq!(inputs[[2, 2]], 1.0);
        assert_eq!(policy_input_dim(1, ds.task()), 3);

        let reg = Dataset::from_parts(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            array![[1.0], [2.0]],
            array![10.0, 30.0],
            TaskHint::Regression,
        )
        .unwrap();
        let inputs = policy_inputs(&reg);
        assert_eq!(inputs.dim(), (2, 2));
        // Targets 10 and 30 standardise to -1 and 1.
        assert!((inputs[[0, 1]] + 1.0).abs() < 1e-12);
        assert!((inputs[[1, 1]] - 1.0).abs() < 1e-12);
    }
}
