//! Trainable train/test splitting.
//!
//! This crate learns how to divide a dataset into train and test subsets.
//! A recurrent sampling policy assigns each sample to one side, a pool of
//! seeded base learners is fitted on the train side and scored on the test
//! side, and the resulting score is fed back to the policy as a reinforcement
//! signal. Penalties keep the split close to a requested train ratio and keep
//! the two sides distributionally similar.
//!
//! The main entry points are:
//!
//! - [`dataset::Dataset`] for loading and validating data,
//! - [`engine::run`] for training a sampling policy end to end,
//! - [`engine::baselines`] for classical random and stratified splits,
//! - [`engine::evaluate`] for scoring an existing split with the learner pool.

pub mod dataset;
pub mod engine;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod optim;
pub mod policy;
pub mod regularizers;
pub mod rewards;
pub mod scaler;
pub mod seeds;
pub mod split;

pub use dataset::{Dataset, Task, TaskHint};
pub use engine::{run, RunConfig, RunOutcome};
pub use error::{Error, Result};
pub use rewards::{MetricKind, RewardMechanism};
pub use split::{Assignment, Split};
