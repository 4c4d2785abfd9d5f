//! Proximal policy optimization: rollouts, advantage estimation, clipped
//! surrogate updates.

pub mod buffer;
pub mod gae;
pub mod train;
pub mod update;

use serde::{Deserialize, Serialize};

use crate::config::ActionKind;
use crate::error::{Error, Result};

pub use gae::compute_gae;
pub use train::{train, TrainOptions, TrainResult, TrainStats};
pub use update::{ppo_update, Batch, UpdateStats};

pub const CONTINUOUS_BATCH_SIZE: usize = 4096;
pub const DISCRETE_BATCH_SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// `None` picks the per-action-kind default.
    pub batch_size: Option<usize>,
    /// Accept the discrete-sized batch for a continuous run.
    pub allow_small_continuous_batch: bool,
    pub buffer_size: usize,
    pub learning_rate: f64,
    /// Decision steps summed over all environments.
    pub max_steps: u64,
    pub num_epochs: usize,
    pub time_horizon: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub entropy_beta: f64,
    pub value_coeff: f64,
    pub grad_clip_norm: f64,
    pub n_parallel_envs: usize,
    /// Write `ckpt_<step>.fw` every this many updates (0: only at exit).
    pub checkpoint_every: usize,
    pub curiosity_learning_rate: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: None,
            allow_small_continuous_batch: false,
            buffer_size: 40960,
            learning_rate: 3e-4,
            max_steps: 20_000_000,
            num_epochs: 5,
            time_horizon: 1000,
            gamma: 0.995,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            entropy_beta: 5e-3,
            value_coeff: 0.5,
            grad_clip_norm: 0.5,
            n_parallel_envs: 8,
            checkpoint_every: 10,
            curiosity_learning_rate: 3e-4,
        }
    }
}

impl PpoConfig {
    pub fn batch_size_for(&self, kind: ActionKind) -> usize {
        self.batch_size.unwrap_or(match kind {
            ActionKind::Continuous => CONTINUOUS_BATCH_SIZE,
            ActionKind::Discrete => DISCRETE_BATCH_SIZE,
        })
    }

    pub fn validate(&self, kind: ActionKind) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("ppo: {m}")));
        let batch = self.batch_size_for(kind);
        if batch == 0 || self.buffer_size == 0 || !self.buffer_size.is_multiple_of(batch) {
            return bad(format!("buffer_size {} must be a positive multiple of batch_size {batch}", self.buffer_size));
        }
        if kind == ActionKind::Continuous && batch == DISCRETE_BATCH_SIZE && !self.allow_small_continuous_batch {
            return bad(format!(
                "continuous actions with the discrete batch size {DISCRETE_BATCH_SIZE}; \
                 set allow_small_continuous_batch to override"
            ));
        }
        if self.time_horizon == 0 || self.time_horizon > self.buffer_size {
            return bad(format!("time_horizon {} must lie in 1..=buffer_size", self.time_horizon));
        }
        if self.n_parallel_envs == 0 || !self.buffer_size.is_multiple_of(self.n_parallel_envs) {
            return bad(format!(
                "buffer_size {} must split evenly over {} environments",
                self.buffer_size, self.n_parallel_envs
            ));
        }
        if self.max_steps < self.buffer_size as u64 {
            return bad("max_steps must cover at least one buffer".into());
        }
        if self.num_epochs == 0 {
            return bad("num_epochs must be positive".into());
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        let nonneg = [
            self.learning_rate,
            self.clip_epsilon,
            self.entropy_beta,
            self.value_coeff,
            self.grad_clip_norm,
            self.curiosity_learning_rate,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return bad("rates, coefficients and clip values must be >= 0".into());
        }
        Ok(())
    }

    /// Linearly decayed rate after `steps` of `max_steps`.
    pub fn lr_at(&self, steps: u64) -> f64 {
        self.learning_rate * (1.0 - steps as f64 / self.max_steps as f64).max(0.0)
    }
}
