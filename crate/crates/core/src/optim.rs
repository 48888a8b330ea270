//! RMSprop over flat parameter vectors, shared by the sampling policy and the
//! neural base learner.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    /// Starting value of the squared-gradient accumulator. Zero gives the
    /// textbook first step of `lr / sqrt(1 - decay)` per unit gradient, a
    /// large spike when `decay` is close to one; one reproduces the classic
    /// TensorFlow initialization whose first steps stay near `lr * g` and
    /// ease into the normalized regime as the average fills in.
    pub acc_init: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: 1e-3,
            decay: 0.99,
            eps: 1e-8,
            acc_init: 0.0,
        }
    }
}

/// RMSprop state: a running mean of squared gradients per parameter.
#[derive(Debug, Clone)]
pub struct RmsProp {
    cfg: RmsPropConfig,
    acc: Vec<f64>,
}

impl RmsProp {
    pub fn new(cfg: RmsPropConfig, n_params: usize) -> RmsProp {
        RmsProp {
            acc: vec![cfg.acc_init; n_params],
            cfg,
        }
    }

    /// Applies one update in place:
    /// `acc <- decay * acc + (1 - decay) * g^2`, then
    /// `p <- p - lr * g / (sqrt(acc) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.acc.len() || grads.len() != self.acc.len() {
            return Err(Error::InvalidConfig(format!(
                "rmsprop: {} params, {} grads, state sized {}",
                params.len(),
                grads.len(),
                self.acc.len()
            )));
        }
        if let Some(bad) = grads.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("rmsprop: gradient {bad}")));
        }
        let RmsPropConfig { lr, decay, eps, .. } = self.cfg;
        for ((p, g), a) in params.iter_mut().zip(grads).zip(self.acc.iter_mut()) {
            *a = decay * *a + (1.0 - decay) * g * g;
            *p -= lr * g / (a.sqrt() + eps);
        }
        Ok(())
    }
}
