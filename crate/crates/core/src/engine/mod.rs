//! The training engine: learns a split policy by episodic reinforcement.
//!
//! Each episode samples a train/test assignment from the policy, fits the
//! configured learners on the train side, scores them on the test side, and
//! turns that score into a return the policy is updated with. Two reward
//! mechanisms are supported: the deterministic one scores the ensemble of all
//! learners every episode, the stochastic one draws a single learner per
//! episode from a selection distribution.

pub mod baselines;
pub mod evaluate;
pub mod synth;

use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::learners::{LearnerSpec, Predictions};
use crate::optim::{RmsProp, RmsPropConfig};
use crate::policy::{
    policy_inputs, IidTerm, LossScales, Policy, PretrainOutcome, Trajectory,
};
use crate::regularizers::kl_knn;
use crate::rewards::{
    check_rho, choose_learner, ensemble_metric, MetricKind, RewardMechanism,
};
use crate::seeds::{SeedSpace, Stream};
use crate::split::Split;

pub const DEFAULT_EPISODES: usize = 150;
pub const DEFAULT_HIDDEN_SIZE: usize = 32;
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_PRETRAIN_PASSES: usize = 300;
pub const DEFAULT_KNN_K: usize = 1;

const RMSPROP_DECAY: f64 = 0.99;
const RMSPROP_EPS: f64 = 1e-8;
/// The policy optimizer starts with a warm squared-gradient average. A cold
/// start would scale the very first update by `1 / sqrt(1 - decay)`, ten
/// times the learning rate, and that single coherent jump saturates the
/// sampling probabilities and floods the first dozens of episodes with
/// degenerate splits.
const RMSPROP_ACC_INIT: f64 = 1.0;
/// Episode gradients are clipped to this global Euclidean norm before the
/// optimizer sees them. The ratio penalty is an absolute value, so its
/// subgradient keeps full strength arbitrarily close to the target; summed
/// over every sample it can saturate all sampling probabilities in a single
/// step, and a saturated sigmoid leaves no gradient to pull them back.
const GRAD_CLIP_NORM: f64 = 5.0;
const RETURN_EMA_DECAY: f64 = 0.9;

/// Training stops early once the greedy ratio stays within this band of its
/// window mean while the window brings no new best shaped reward.
const EARLY_STOP_WINDOW: usize = 25;
const EARLY_STOP_RATIO_TOL: f64 = 0.005;


/// Full configuration of a training run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mechanism: RewardMechanism,
    pub metric: MetricKind,
    /// Desired fraction of samples on the train side.
    pub target_ratio: f64,
    pub episodes: usize,
    pub hidden_size: usize,
    /// RMSprop learning rate for the policy.
    pub lr: f64,
    pub seed: u64,
    pub scales: LossScales,
    pub learners: Vec<LearnerSpec>,
    /// Subtract a running mean from the shaped return before the update.
    pub baseline_subtraction: bool,
    /// Learner selection weights for the stochastic mechanism; `None` means
    /// uniform.
    pub rho: Option<Vec<f64>>,
    /// Supervised warm-up passes nudging the policy towards the target
    /// ratio; zero skips the warm-up.
    pub pretrain_passes: usize,
    /// Neighbour count for the regression divergence estimate.
    pub knn_k: usize,
}

impl RunConfig {
    pub fn new(
        mechanism: RewardMechanism,
        metric: MetricKind,
        target_ratio: f64,
        seed: u64,
        learners: Vec<LearnerSpec>,
    ) -> RunConfig {
        RunConfig {
            mechanism,
            metric,
            target_ratio,
            episodes: DEFAULT_EPISODES,
            hidden_size: DEFAULT_HIDDEN_SIZE,
            lr: DEFAULT_LEARNING_RATE,
            seed,
            scales: LossScales::default(),
            learners,
            baseline_subtraction: false,
            rho: None,
            pretrain_passes: DEFAULT_PRETRAIN_PASSES,
            knn_k: DEFAULT_KNN_K,
        }
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let task = dataset.task();
        if dataset.n_samples() < 4 {
            return Err(Error::InvalidData(
                "need at least four samples to train a sampler".into(),
            ));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target train ratio must lie strictly between 0 and 1, got {}",
                self.target_ratio
            )));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("need at least one episode".into()));
        }
        if self.hidden_size == 0 {
            return Err(Error::InvalidConfig(
                "policy hidden size must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be a finite positive number, got {}",
                self.lr
            )));
        }
        for (name, value) in [
            ("alpha", self.scales.alpha),
            ("gamma", self.scales.gamma),
            ("psi", self.scales.psi),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "loss scale {name} must be a finite non-negative number, got {value}"
                )));
            }
        }
        self.metric.validate_for(task)?;
        if self.learners.is_empty() {
            return Err(Error::InvalidConfig("need at least one learner".into()));
        }
        for spec in &self.learners {
            if !spec.kind().supports(task) {
                return Err(Error::InvalidConfig(format!(
                    "learner '{}' does not support this task",
                    spec.kind()
                )));
            }
        }
        if self.knn_k == 0 {
            return Err(Error::InvalidConfig(
                "divergence neighbour count must be positive".into(),
            ));
        }
        match (&self.rho, self.mechanism) {
            (Some(rho), RewardMechanism::Stochastic) => {
                check_rho(rho, self.learners.len())?
            }
            (Some(_), RewardMechanism::Deterministic) => {
                return Err(Error::InvalidConfig(
                    "learner selection weights only apply to the stochastic mechanism"
                        .into(),
                ))
            }
            (None, _) => {}
        }
        Ok(())
    }
}

/// Everything recorded about one training episode.
#[derive(Debug, Clone)]
pub struct EpisodeLog {
    /// One-based episode number.
    pub episode: usize,
    /// Raw test-side metric; failed episodes carry the worst reward observed
    /// so far (zero before any success).
    pub reward: f64,
    /// Return after shaping (regression subtracts the scaled divergence).
    pub reward_shaped: f64,
    /// Train fraction of the sampled assignment.
    pub ratio: f64,
    pub loss_policy: f64,
    pub loss_ratio: f64,
    pub loss_iid: f64,
    /// Per-learner test metrics; `None` where a learner was not fitted this
    /// episode (unchosen under the stochastic mechanism, or a failure).
    pub learner_metrics: Vec<Option<f64>>,
    /// Index of the learner drawn under the stochastic mechanism.
    pub chosen_learner: Option<usize>,
    pub failed: bool,
    /// Wall-clock duration of the episode.
    pub seconds: f64,
}

/// Where the returned split came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSource {
    /// Deterministic decode of the trained policy.
    GreedyDecode,
    /// The sampled split with the highest raw reward, used when the greedy
    /// decode is one-sided.
    BestSampled,
}

impl SplitSource {
    pub fn name(&self) -> &'static str {
        match self {
            SplitSource::GreedyDecode => "greedy_decode",
            SplitSource::BestSampled => "best_sampled",
        }
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub split: Split,
    pub split_source: SplitSource,
    pub policy: Policy,
    pub pretrain: Option<PretrainOutcome>,
    pub episodes: Vec<EpisodeLog>,
    /// The episode after which training stopped, when earlier than the
    /// configured count.
    pub stopped_early: Option<usize>,
}

struct EpisodeEval {
    reward: f64,
    /// Nearest-neighbour divergence of test from train targets; zero for
    /// classification, where the penalty is differentiable instead.
    divergence: f64,
    per_learner: Vec<Option<f64>>,
}

fn fit_and_score(
    spec: &LearnerSpec,
    x_train: &ndarray::Array2<f64>,
    y_train: &ndarray::Array1<f64>,
    x_test: &ndarray::Array2<f64>,
    task: Task,
    seed: u64,
) -> Result<Predictions> {
    spec.fit(x_train.view(), y_train.view(), task, seed)?
        .predict(x_test.view())
}

fn episode_eval(
    dataset: &Dataset,
    split: &Split,
    config: &RunConfig,
    chosen: Option<usize>,
    learner_seeds: &[u64],
) -> Result<EpisodeEval> {
    let task = dataset.task();
    let (x_train, x_test) = split.partition_rows(dataset.features());
    let (y_train, y_test) = split.partition_values(dataset.targets());

    let divergence = match task {
        Task::Regression => kl_knn(
            y_test.as_slice().expect("contiguous"),
            y_train.as_slice().expect("contiguous"),
            config.knn_k,
        )?,
        _ => 0.0,
    };

    let (reward, per_learner) = match chosen {
        None => {
            let preds: Vec<Predictions> = config
                .learners
                .par_iter()
                .enumerate()
                .map(|(i, spec)| {
                    fit_and_score(spec, &x_train, &y_train, &x_test, task, learner_seeds[i])
                })
                .collect::<Result<Vec<_>>>()?;
            let per = preds
                .iter()
                .map(|p| config.metric.compute(&y_test.view(), p).map(Some))
                .collect::<Result<Vec<_>>>()?;
            (ensemble_metric(config.metric, &y_test.view(), &preds)?, per)
        }
        Some(k) => {
            let pred = fit_and_score(
                &config.learners[k],
                &x_train,
                &y_train,
                &x_test,
                task,
                learner_seeds[k],
            )?;
            let score = config.metric.compute(&y_test.view(), &pred)?;
            let mut per = vec![None; config.learners.len()];
            per[k] = Some(score);
            (score, per)
        }
    };

    Ok(EpisodeEval {
        reward,
        divergence,
        per_learner,
    })
}

/// Failures tied to the sampled split (one-sided assignments, single-class
/// train sides, metric preconditions, diverged fits). The run absorbs these
/// and moves on; anything else is a hard error.
fn is_episode_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateSplit(_) | Error::InvalidData(_) | Error::NonFinite(_)
    )
}

/// Whether the greedy ratio has settled with no new best shaped reward in
/// the trailing window. One-sided decodes do not count as settled: a decode
/// stuck at ratio 0 or 1 yields no achievable split, so training continues.
fn settled_without_improvement(greedy_ratios: &[f64], shaped_rewards: &[f64]) -> bool {
    let n = greedy_ratios.len();
    if n <= EARLY_STOP_WINDOW {
        return false;
    }
    let window = &greedy_ratios[n - EARLY_STOP_WINDOW..];
    if window.iter().any(|r| *r <= 0.0 || *r >= 1.0) {
        return false;
    }
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    if window.iter().any(|r| (r - mean).abs() > EARLY_STOP_RATIO_TOL) {
        return false;
    }
    let best = |slice: &[f64]| slice.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    best(&shaped_rewards[n - EARLY_STOP_WINDOW..])
        <= best(&shaped_rewards[..n - EARLY_STOP_WINDOW])
}

/// Trains a sampling policy on the dataset and returns the split it settles
/// on together with the full episode history.
pub fn run(dataset: &Dataset, config: &RunConfig) -> Result<RunOutcome> {
    config.validate(dataset)?;
    let task = dataset.task();
    let inputs = policy_inputs(dataset);
    let n_learners = config.learners.len();
    let rho = config
        .rho
        .clone()
        .unwrap_or_else(|| vec![1.0 / n_learners as f64; n_learners]);
    let labels: Option<Vec<usize>> = task
        .num_classes()
        .map(|_| dataset.targets().iter().map(|y| *y as usize).collect());

    let seeds = SeedSpace::new(config.seed);
    let mut policy = Policy::new(
        inputs.ncols(),
        config.hidden_size,
        &mut seeds.rng(Stream::PolicyInit),
    )?;
    let pretrain = if config.pretrain_passes > 0 {
        let outcome = policy.pretrain(
            &inputs.view(),
            config.target_ratio,
            config.pretrain_passes,
            &mut seeds.rng(Stream::Pretrain),
        )?;
        log::info!(
            "ratio warm-up: {} passes, gap {:.4}{}",
            outcome.passes,
            outcome.gap,
            if outcome.converged { "" } else { " (not converged)" }
        );
        Some(outcome)
    } else {
        None
    };

    let mut opt = RmsProp::new(
        RmsPropConfig {
            lr: config.lr,
            decay: RMSPROP_DECAY,
            eps: RMSPROP_EPS,
            acc_init: RMSPROP_ACC_INIT,
        },
        policy.n_params(),
    );
    let mut traj_rng = seeds.rng(Stream::Trajectory);
    let mut choice_rng = seeds.rng(Stream::LearnerChoice);
    let learner_seeds: Vec<u64> = (0..n_learners)
        .map(|i| seeds.seed(Stream::Learner(i as u64)))
        .collect();

    let mut logs: Vec<EpisodeLog> = Vec::with_capacity(config.episodes);
    let mut greedy_ratios: Vec<f64> = Vec::with_capacity(config.episodes);
    let mut shaped_history: Vec<f64> = Vec::with_capacity(config.episodes);
    let mut worst_reward: Option<f64> = None;
    let mut best_sampled: Option<(f64, Split)> = None;
    let mut return_baseline: Option<f64> = None;
    let mut n_failed = 0usize;
    let mut stopped_early = None;

    for episode in 1..=config.episodes {
        let started = Instant::now();
        let traj = policy.sample_trajectory(&inputs.view(), &mut traj_rng)?;
        let chosen = match config.mechanism {
            RewardMechanism::Stochastic => Some(choose_learner(&rho, &mut choice_rng)?),
            RewardMechanism::Deterministic => None,
        };

        let evaluated = traj.to_split().and_then(|split| {
            episode_eval(dataset, &split, config, chosen, &learner_seeds)
                .map(|ev| (split, ev))
        });
        let (reward, shaped, metrics, divergence, failed) = match evaluated {
            Ok((split, ev)) => {
                let shaped = match task {
                    Task::Regression => ev.reward - config.scales.psi * ev.divergence,
                    _ => ev.reward,
                };
                if best_sampled.as_ref().map_or(true, |(r, _)| ev.reward > *r) {
                    best_sampled = Some((ev.reward, split));
                }
                worst_reward = Some(worst_reward.map_or(ev.reward, |w| w.min(ev.reward)));
                (ev.reward, shaped, ev.per_learner, ev.divergence, false)
            }
            Err(e) if is_episode_failure(&e) => {
                n_failed += 1;
                log::warn!("episode {episode} failed: {e}");
                let fallback = worst_reward.unwrap_or(0.0);
                (fallback, fallback, vec![None; n_learners], 0.0, true)
            }
            Err(e) => return Err(e),
        };

        // Abort as soon as a majority-failed run is unavoidable: once more
        // than half the configured budget has failed, no remaining episodes
        // can bring the failure fraction back under one half.
        if n_failed * 2 > config.episodes {
            return Err(Error::Aborted(format!(
                "{n_failed} of {} episodes failed; the sampler cannot produce usable splits",
                config.episodes
            )));
        }

        let update_return = if config.baseline_subtraction {
            match return_baseline {
                None => {
                    return_baseline = Some(shaped);
                    0.0
                }
                Some(prev) => {
                    return_baseline =
                        Some(RETURN_EMA_DECAY * prev + (1.0 - RETURN_EMA_DECAY) * shaped);
                    shaped - prev
                }
            }
        } else {
            shaped
        };

        let iid = match (&labels, task.num_classes()) {
            (Some(l), Some(num_classes)) => Some(IidTerm::Soft {
                labels: l,
                num_classes,
            }),
            _ => Some(IidTerm::External(config.scales.psi * divergence)),
        };
        let (loss, mut grads) = policy.reinforce_loss_and_grads(
            &inputs.view(),
            &traj,
            update_return,
            config.scales,
            config.target_ratio,
            iid,
        )?;
        grads.clip_global_norm(GRAD_CLIP_NORM);
        policy.apply_gradients(&mut opt, &grads)?;

        logs.push(EpisodeLog {
            episode,
            reward,
            reward_shaped: shaped,
            ratio: traj.train_ratio(),
            loss_policy: loss.policy,
            loss_ratio: loss.ratio,
            loss_iid: loss.iid,
            learner_metrics: metrics,
            chosen_learner: chosen,
            failed,
            seconds: started.elapsed().as_secs_f64(),
        });
        greedy_ratios.push(policy.greedy_decode(&inputs.view())?.train_ratio());
        shaped_history.push(shaped);

        if episode < config.episodes
            && settled_without_improvement(&greedy_ratios, &shaped_history)
        {
            log::info!(
                "stopping after episode {episode}: greedy ratio settled at {:.3} \
                 with no reward improvement",
                greedy_ratios[episode - 1]
            );
            stopped_early = Some(episode);
            break;
        }
    }

    let greedy = policy.greedy_decode(&inputs.view())?;
    let (split, split_source) = match greedy.to_split() {
        Ok(split) => (split, SplitSource::GreedyDecode),
        Err(e) => {
            log::warn!(
                "greedy decode produced a one-sided assignment ({e}); \
                 falling back to the best sampled split"
            );
            match best_sampled {
                Some((_, split)) => (split, SplitSource::BestSampled),
                None => {
                    return Err(Error::Aborted(
                        "no usable split: the greedy decode is one-sided and no \
                         sampled episode succeeded"
                            .into(),
                    ))
                }
            }
        }
    };

    Ok(RunOutcome {
        split,
        split_source,
        policy,
        pretrain,
        episodes: logs,
        stopped_early,
    })
}

/// Greedy decode of an already trained policy against a dataset, as used by
/// checkpoint-driven evaluation.
pub fn decode_split(dataset: &Dataset, policy: &Policy) -> Result<(Split, Trajectory)> {
    let inputs = policy_inputs(dataset);
    if inputs.ncols() != policy.input_dim() {
        return Err(Error::InvalidConfig(format!(
            "policy expects {} input columns but the dataset produces {}",
            policy.input_dim(),
            inputs.ncols()
        )));
    }
    let traj = policy.greedy_decode(&inputs.view())?;
    let split = traj.to_split()?;
    Ok((split, traj))
}
