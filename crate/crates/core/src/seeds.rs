//! Deterministic fan-out of one user-facing seed into independent RNG streams.
//!
//! Every stochastic component (policy init, pretraining, trajectory sampling,
//! learner choice, baselines, synthetic data, per-learner seeds) draws from its
//! own stream so that adding draws to one component never shifts another.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Standard normal draw via the Box-Muller transform.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Derives a child seed from a base seed and a purpose tag.
///
/// Uses the SplitMix64 finalizer so nearby `(base, tag)` pairs map to
/// statistically unrelated outputs.
pub fn child_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(tag.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose tags for the RNG streams of a run. Each variant owns a disjoint
/// stream derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    PolicyInit,
    Pretrain,
    Trajectory,
    LearnerChoice,
    Baseline,
    Synth,
    /// Seed material for the i-th base learner.
    Learner(u64),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::PolicyInit => 1,
            Stream::Pretrain => 2,
            Stream::Trajectory => 3,
            Stream::LearnerChoice => 4,
            Stream::Baseline => 5,
            Stream::Synth => 6,
            // Learner tags start high so adding engine streams stays cheap.
            Stream::Learner(i) => 1000 + i,
        }
    }
}

/// Factory of independent RNGs for one run seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedSpace {
    base: u64,
}

impl SeedSpace {
    pub fn new(base: u64) -> Self {
        SeedSpace { base }
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    /// Seed value for the given stream.
    pub fn seed(&self, stream: Stream) -> u64 {
        child_seed(self.base, stream.tag())
    }

    /// Fresh RNG for the given stream. Calling twice returns identical RNGs.
    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed(stream))
    }
}
