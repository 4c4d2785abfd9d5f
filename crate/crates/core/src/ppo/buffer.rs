//! Per-environment trajectories and their conversion into an update batch.

use ndarray::Array2;

use super::gae::{compute_gae, normalize_advantages};
use super::update::Batch;
use crate::controller::Action;
use crate::error::{Error, Result};
use crate::rewards::RewardBreakdown;

/// How a recorded step ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEnd {
    Continue,
    /// Out of bounds or task complete: no bootstrap.
    Terminal,
    /// Step cap: bootstrap from the value of the final observation.
    Timeout,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub action: Action,
    pub log_prob: f64,
    /// One entry per value head.
    pub values: Vec<f64>,
    pub reward: RewardBreakdown,
    pub end: StepEnd,
    pub episode_id: u64,
    /// Values of the terminal observation, filled for timeouts.
    pub terminal_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct EnvTrajectory {
    /// Row-major network inputs, one row per step.
    pub obs: Vec<f32>,
    pub steps: Vec<StepRecord>,
    /// `(step index, observation)` of every episode end.
    pub terminal_obs: Vec<(usize, Vec<f32>)>,
    /// Observation after the last recorded step.
    pub final_obs: Vec<f32>,
    pub final_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub envs: Vec<EnvTrajectory>,
}

/// Per-stream discounting.
#[derive(Debug, Clone, Copy)]
pub struct StreamSpec {
    pub gamma: f64,
    pub lambda: f64,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, n_envs: usize) -> Self {
        Self {
            obs_dim,
            envs: vec![EnvTrajectory::default(); n_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.envs.iter().map(|e| e.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Observation following each step, in buffer order.
    pub fn next_obs(&self) -> Array2<f32> {
        let d = self.obs_dim;
        let mut out = Vec::with_capacity(self.len() * d);
        for e in &self.envs {
            let mut term = e.terminal_obs.iter().peekable();
            for t in 0..e.steps.len() {
                match term.peek() {
                    Some((s, o)) if *s == t => {
                        out.extend_from_slice(o);
                        term.next();
                    }
                    _ if t + 1 < e.steps.len() => out.extend_from_slice(&e.obs[(t + 1) * d..(t + 2) * d]),
                    _ => out.extend_from_slice(&e.final_obs),
                }
            }
        }
        Array2::from_shape_vec((self.len(), d), out).expect("rows of obs_dim")
    }

    pub fn obs(&self) -> Array2<f32> {
        let mut out = Vec::with_capacity(self.len() * self.obs_dim);
        for e in &self.envs {
            out.extend_from_slice(&e.obs);
        }
        Array2::from_shape_vec((self.len(), self.obs_dim), out).expect("rows of obs_dim")
    }

    pub fn actions(&self) -> Vec<Action> {
        self.envs.iter().flat_map(|e| e.steps.iter().map(|s| s.action)).collect()
    }

    /// Advantages and returns for value head `head` with rewards `rewards`
    /// (buffer order). Segments end at episode ends, every `time_horizon`
    /// steps, and at the end of the rollout.
    pub fn stream_gae(&self, head: usize, rewards: &[f64], spec: StreamSpec, time_horizon: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if rewards.len() != self.len() {
            return Err(Error::LengthMismatch(format!("{} rewards for {} steps", rewards.len(), self.len())));
        }
        let mut adv = Vec::with_capacity(self.len());
        let mut ret = Vec::with_capacity(self.len());
        let mut offset = 0;
        for e in &self.envs {
            let n = e.steps.len();
            let mut start = 0;
            while start < n {
                let mut end = start;
                while end + 1 < n && e.steps[end].end == StepEnd::Continue && end + 1 - start < time_horizon {
                    end += 1;
                }
                let seg = &e.steps[start..=end];
                let last = &e.steps[end];
                let (bootstrap, terminal) = match last.end {
                    StepEnd::Terminal => (0.0, true),
                    StepEnd::Timeout => (
                        last.terminal_values.as_ref().ok_or_else(|| Error::LengthMismatch("timeout without terminal value".into()))?[head],
                        false,
                    ),
                    StepEnd::Continue if end + 1 < n => (e.steps[end + 1].values[head], false),
                    StepEnd::Continue => (e.final_values[head], false),
                };
                let values: Vec<f64> = seg.iter().map(|s| s.values[head]).collect();
                let mut dones = vec![false; seg.len()];
                dones[seg.len() - 1] = terminal;
                let (a, r) = compute_gae(
                    &rewards[offset + start..offset + end + 1],
                    &values,
                    &dones,
                    bootstrap,
                    spec.gamma,
                    spec.lambda,
                )?;
                adv.extend(a);
                ret.extend(r);
                start = end + 1;
            }
            offset += n;
        }
        Ok((adv, ret))
    }

    /// Assembles the update batch. `intrinsic` carries curiosity rewards and
    /// their discounting when a second value head exists.
    pub fn into_batch(&self, extrinsic: StreamSpec, intrinsic: Option<(&[f64], StreamSpec)>, time_horizon: usize) -> Result<Batch<f32>> {
        let ext_rewards: Vec<f64> = self
            .envs
            .iter()
            .flat_map(|e| e.steps.iter().map(|s| s.reward.total - s.reward.curiosity))
            .collect();
        let (mut adv, ext_ret) = self.stream_gae(0, &ext_rewards, extrinsic, time_horizon)?;
        normalize_advantages(&mut adv);
        let heads = if intrinsic.is_some() { 2 } else { 1 };
        let mut returns = Array2::zeros((self.len(), heads));
        for (i, r) in ext_ret.iter().enumerate() {
            returns[[i, 0]] = *r;
        }
        if let Some((rewards, spec)) = intrinsic {
            let (mut a2, r2) = self.stream_gae(1, rewards, spec, time_horizon)?;
            normalize_advantages(&mut a2);
            for (i, (a, r)) in a2.iter().zip(&r2).enumerate() {
                adv[i] += a;
                returns[[i, 1]] = *r;
            }
        }
        Ok(Batch {
            obs: self.obs(),
            actions: self.actions(),
            old_log_probs: self.envs.iter().flat_map(|e| e.steps.iter().map(|s| s.log_prob)).collect(),
            advantages: adv,
            returns,
        })
    }
}
