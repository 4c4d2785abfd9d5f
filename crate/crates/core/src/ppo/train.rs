//! Rollout/update loop.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{RolloutBuffer, StepEnd, StepRecord, StreamSpec};
use super::update::{ppo_update, shuffle};
use crate::curiosity::Icm;
use crate::env::{EpisodeSummary, Transition};
use crate::error::{Error, Result};
use crate::neural::checkpoint::save_checkpoint;
use crate::neural::dist::sample_action;
use crate::neural::optim::Adam;
use crate::neural::PolicyNet;
use crate::rng::Rng;
use crate::run::RunConfig;
use crate::world::DoneReason;

/// Stream ids; environment instances use `0..n_envs`.
const POLICY_STREAM: u64 = 1 << 20;
const INIT_STREAM: u64 = 2 << 20;
const UPDATE_STREAM: u64 = 3 << 20;
const CURIOSITY_STREAM: u64 = 4 << 20;

/// Rows evaluated at once when scoring a whole buffer.
const EVAL_CHUNK: usize = 256;

pub const TRAIN_LOG: &str = "train_log.csv";
pub const REWARD_LOG: &str = "rewards_debug.csv";

/// One row of `train_log.csv`, emitted per update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub step: u64,
    /// Mean return of episodes finished during the rollout (NaN if none).
    pub mean_reward: f64,
    pub mean_ep_len: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where logs and checkpoints go; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub log_rewards: bool,
    /// Worker threads for environment stepping (`None`: rayon default).
    pub threads: Option<usize>,
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Global step count when the episode ended.
    pub step: u64,
    pub env: usize,
    pub summary: EpisodeSummary,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub net: PolicyNet<f32>,
    pub stats: Vec<TrainStats>,
    pub episodes: Vec<EpisodeRecord>,
    pub final_checkpoint: Option<PathBuf>,
}

pub fn train(cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| Trainer::new(cfg, opts)?.run())
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    opts: &'a TrainOptions,
    envs: Vec<crate::env::Env>,
    policy_rngs: Vec<Rng>,
    update_rng: Rng,
    net: PolicyNet<f32>,
    opt: Adam<f32>,
    icm: Option<(Icm<f32>, Adam<f32>)>,
    cur_obs: Vec<Vec<f32>>,
    episode_ids: Vec<u64>,
    steps: u64,
    log: Option<csv::Writer<fs::File>>,
    reward_log: Option<fs::File>,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a RunConfig, opts: &'a TrainOptions) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.sim.seed;
        let n = cfg.ppo.n_parallel_envs;
        let envs = (0..n)
            .map(|i| crate::env::Env::new(cfg.sim.clone(), cfg.reward.clone(), Rng::for_instance(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let net = PolicyNet::<f32>::new(&cfg.arch(), &mut Rng::for_instance(seed, INIT_STREAM))?;
        let opt = Adam::new(&net.params, 0.9, 0.999, 1e-5);
        let icm = cfg.reward.curiosity_enabled.then(|| {
            let icm = Icm::<f32>::new(
                cfg.sim.obs_kind,
                cfg.sim.action_kind,
                cfg.reward.curiosity_strength,
                &mut Rng::for_instance(seed, CURIOSITY_STREAM),
            );
            let opt = Adam::new(&icm.params, 0.9, 0.999, 1e-5);
            (icm, opt)
        });
        let (log, reward_log) = match &opts.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(TRAIN_LOG);
                let log = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
                let rl = if opts.log_rewards {
                    let p = dir.join(REWARD_LOG);
                    let mut f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                    writeln!(f, "step,env,episode,{}", crate::rewards::RewardBreakdown::CSV_HEADER).map_err(|e| Error::io(&p, e))?;
                    Some(f)
                } else {
                    None
                };
                (Some(log), rl)
            }
            None => (None, None),
        };
        let cur_obs = envs.iter().map(|e| e.observe().network_input()).collect();
        Ok(Self {
            cfg,
            opts,
            policy_rngs: (0..n).map(|i| Rng::for_instance(seed, POLICY_STREAM + i as u64)).collect(),
            update_rng: Rng::for_instance(seed, UPDATE_STREAM),
            envs,
            net,
            opt,
            icm,
            cur_obs,
            episode_ids: vec![0; n],
            steps: 0,
            log,
            reward_log,
        })
    }

    fn values_of(&self, rows: &[&[f32]]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(rows.len());
        let d = self.net.desc.input_dim();
        for chunk in rows.chunks(EVAL_CHUNK) {
            let x = Array2::from_shape_vec((chunk.len(), d), chunk.concat()).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            let o = self.net.forward(x.view())?;
            out.extend(o.values.outer_iter().map(|r| r.iter().map(|&v| v as f64).collect()));
        }
        Ok(out)
    }

    fn diagnostic(&self, env: usize, err: &Error) {
        if let Some(dir) = &self.opts.out_dir {
            let text = format!(
                "{{\"env\": {env}, \"step\": {}, \"error\": {:?}, \"world\": {}}}\n",
                self.steps,
                err.to_string(),
                self.envs[env].state().snapshot_json()
            );
            let _ = fs::write(dir.join("diagnostic.json"), text);
        }
    }

    fn rollout(&mut self, episodes: &mut Vec<EpisodeRecord>) -> Result<RolloutBuffer> {
        let n = self.envs.len();
        let d = self.net.desc.input_dim();
        let per_env = self.cfg.ppo.buffer_size / n;
        let mut buf = RolloutBuffer::new(d, n);
        let mut pending_timeouts: Vec<(usize, usize)> = Vec::new();
        for e in &mut buf.envs {
            e.obs.reserve(per_env * d);
        }
        for _ in 0..per_env {
            let x = Array2::from_shape_vec((n, d), self.cur_obs.concat()).expect("rows of input_dim");
            let out = self.net.forward(x.view())?;
            let mut actions = Vec::with_capacity(n);
            let mut drafts = Vec::with_capacity(n);
            for (i, rng) in self.policy_rngs.iter_mut().enumerate() {
                let row = out.row(i);
                let (a, lp) = sample_action(&row, rng);
                actions.push(a);
                drafts.push((lp, row.values));
            }
            let results: Vec<Result<Transition>> = self
                .envs
                .par_iter_mut()
                .zip(actions.par_iter())
                .map(|(env, a)| env.step(a))
                .collect();
            self.steps += n as u64;
            for (i, (res, (lp, values))) in results.into_iter().zip(drafts).enumerate() {
                let tr = match res {
                    Ok(t) => t,
                    Err(e) => {
                        self.diagnostic(i, &e);
                        return Err(e);
                    }
                };
                let traj = &mut buf.envs[i];
                let t = traj.steps.len();
                traj.obs.extend_from_slice(&self.cur_obs[i]);
                let end = match tr.reason {
                    DoneReason::None => StepEnd::Continue,
                    DoneReason::Timeout => StepEnd::Timeout,
                    DoneReason::OutOfBounds | DoneReason::TaskComplete => StepEnd::Terminal,
                };
                if let Some(term) = &tr.terminal_obs {
                    traj.terminal_obs.push((t, term.network_input()));
                }
                if end == StepEnd::Timeout {
                    pending_timeouts.push((i, t));
                }
                traj.steps.push(StepRecord {
                    action: actions[i],
                    log_prob: lp,
                    values,
                    reward: tr.reward,
                    end,
                    episode_id: self.episode_ids[i],
                    terminal_values: None,
                });
                if let Some(summary) = tr.episode {
                    episodes.push(EpisodeRecord { step: self.steps, env: i, summary });
                    self.episode_ids[i] += 1;
                }
                self.cur_obs[i] = tr.obs.network_input();
            }
        }
        let finals: Vec<&[f32]> = self.cur_obs.iter().map(|o| o.as_slice()).collect();
        let final_values = self.values_of(&finals)?;
        for (e, (o, v)) in buf.envs.iter_mut().zip(self.cur_obs.iter().zip(final_values)) {
            e.final_obs = o.clone();
            e.final_values = v;
        }
        if !pending_timeouts.is_empty() {
            let rows: Vec<Vec<f32>> = pending_timeouts
                .iter()
                .map(|&(i, t)| {
                    let e = &buf.envs[i];
                    e.terminal_obs.iter().find(|(s, _)| *s == t).expect("terminal obs recorded").1.clone()
                })
                .collect();
            let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
            for (&(i, t), v) in pending_timeouts.iter().zip(self.values_of(&refs)?) {
                buf.envs[i].steps[t].terminal_values = Some(v);
            }
        }
        Ok(buf)
    }

    fn curiosity_rewards(&self, buf: &RolloutBuffer) -> Result<Option<Vec<f64>>> {
        let Some((icm, _)) = &self.icm else { return Ok(None) };
        let obs = buf.obs();
        let next = buf.next_obs();
        let actions = buf.actions();
        let mut out = Vec::with_capacity(buf.len());
        for start in (0..buf.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(buf.len());
            out.extend(icm.rewards(
                obs.slice(ndarray::s![start..end, ..]),
                &actions[start..end],
                next.slice(ndarray::s![start..end, ..]),
            )?);
        }
        Ok(Some(out))
    }

    fn train_curiosity(&mut self, buf: &RolloutBuffer, lr: f64) -> Result<()> {
        let Some((icm, opt)) = &mut self.icm else { return Ok(()) };
        let obs = buf.obs();
        let next = buf.next_obs();
        let actions = buf.actions();
        let batch = self.cfg.ppo.batch_size_for(self.cfg.sim.action_kind).min(buf.len());
        let mut order: Vec<usize> = (0..buf.len()).collect();
        for _ in 0..self.cfg.ppo.num_epochs {
            shuffle(&mut order, &mut self.update_rng);
            for idx in order.chunks(batch) {
                let o = obs.select(Axis(0), idx);
                let n = next.select(Axis(0), idx);
                let a: Vec<_> = idx.iter().map(|&i| actions[i]).collect();
                icm.train_step(opt, o.view(), &a, n.view(), lr, self.cfg.ppo.grad_clip_norm)?;
            }
        }
        Ok(())
    }

    fn log_rewards(&mut self, buf: &RolloutBuffer, curiosity: Option<&[f64]>, first_step: u64) -> Result<()> {
        let Some(f) = self.reward_log.as_mut() else { return Ok(()) };
        let n = buf.envs.len() as u64;
        let mut k = 0;
        let mut text = String::new();
        for (env, e) in buf.envs.iter().enumerate() {
            for (t, s) in e.steps.iter().enumerate() {
                let r = match curiosity {
                    Some(c) => s.reward.with_curiosity(c[k]),
                    None => s.reward,
                };
                let step = first_step + t as u64 * n + env as u64;
                text.push_str(&format!("{step},{env},{},{}\n", s.episode_id, r.csv_row()));
                k += 1;
            }
        }
        f.write_all(text.as_bytes())
            .map_err(|e| Error::io(Path::new(REWARD_LOG), e))
    }

    fn checkpoint(&self) -> Result<Option<PathBuf>> {
        match &self.opts.out_dir {
            Some(dir) => {
                let p = dir.join(format!("ckpt_{}.fw", self.steps));
                save_checkpoint(&self.net, &p)?;
                Ok(Some(p))
            }
            None => Ok(None),
        }
    }

    fn run(mut self) -> Result<TrainResult> {
        let ppo = self.cfg.ppo.clone();
        let updates = ppo.max_steps / ppo.buffer_size as u64;
        let mut stats = Vec::with_capacity(updates as usize);
        let mut episodes = Vec::new();
        let mut final_checkpoint = None;
        for u in 0..updates {
            let first_step = self.steps;
            let lr = ppo.lr_at(first_step);
            let ep_start = episodes.len();
            let buf = self.rollout(&mut episodes)?;
            let curiosity = self.curiosity_rewards(&buf)?;
            self.log_rewards(&buf, curiosity.as_deref(), first_step)?;
            let ext = StreamSpec { gamma: ppo.gamma, lambda: ppo.gae_lambda };
            let int = StreamSpec { gamma: self.cfg.reward.curiosity_gamma, lambda: ppo.gae_lambda };
            let batch = buf.into_batch(ext, curiosity.as_deref().map(|c| (c, int)), ppo.time_horizon)?;
            let dump = self.opts.out_dir.as_deref();
            let us = ppo_update(&mut self.net, &mut self.opt, &batch, &ppo, lr, &mut self.update_rng, dump)?;
            self.train_curiosity(&buf, ppo.curiosity_learning_rate * (lr / ppo.learning_rate.max(f64::MIN_POSITIVE)))?;

            let done = &episodes[ep_start..];
            let (mean_reward, mean_ep_len) = if done.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let k = done.len() as f64;
                (
                    done.iter().map(|e| e.summary.reward).sum::<f64>() / k,
                    done.iter().map(|e| e.summary.length as f64).sum::<f64>() / k,
                )
            };
            let row = TrainStats {
                step: self.steps,
                mean_reward,
                mean_ep_len,
                policy_loss: us.policy_loss,
                value_loss: us.value_loss,
                entropy: us.entropy,
                clip_frac: us.clip_frac,
                lr,
            };
            if let Some(w) = self.log.as_mut() {
                w.serialize(row)?;
                w.flush().map_err(|e| Error::io(Path::new(TRAIN_LOG), e))?;
            }
            if self.opts.verbose {
                eprintln!(
                    "step {:>9}  reward {:>9.4}  len {:>7.1}  entropy {:>7.3}  clip {:.3}",
                    row.step, row.mean_reward, row.mean_ep_len, row.entropy, row.clip_frac
                );
            }
            stats.push(row);
            let last = u + 1 == updates;
            if last || (ppo.checkpoint_every > 0 && (u + 1) % ppo.checkpoint_every as u64 == 0) {
                let p = self.checkpoint()?;
                if last {
                    final_checkpoint = p;
                }
            }
        }
        Ok(TrainResult { net: self.net, stats, episodes, final_checkpoint })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::PpoConfig;

    fn tiny(seed: u64) -> RunConfig {
        let mut c = RunConfig::default();
        c.sim.seed = seed;
        c.sim.arena_half_extent = 10.0;
        c.sim.max_episode_steps = 40;
        c.network.hidden_units = 8;
        c.network.num_layers = 1;
        c.ppo = PpoConfig {
            buffer_size: 64,
            batch_size: Some(32),
            max_steps: 128,
            n_parallel_envs: 4,
            time_horizon: 16,
            num_epochs: 2,
            checkpoint_every: 1,
            ..Default::default()
        };
        c.resolve().unwrap()
    }

    #[test]
    fn one_update_per_buffer() {
        let mut c = tiny(1);
        c.ppo.max_steps = 64;
        let r = train(&c, &TrainOptions::default()).unwrap();
        assert_eq!(r.stats.len(), 1);
        assert_eq!(r.stats[0].step, 64);
    }

    #[test]
    fn writes_log_and_checkpoints_deterministically() {
        let c = tiny(5);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for d in [&a, &b] {
            let opts = TrainOptions { out_dir: Some(d.path().into()), log_rewards: true, ..Default::default() };
            train(&c, &opts).unwrap();
        }
        for f in [TRAIN_LOG, "ckpt_64.fw", "ckpt_128.fw", REWARD_LOG] {
            let x = fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let log = fs::read_to_string(a.path().join(TRAIN_LOG)).unwrap();
        assert_eq!(
            log.lines().next().unwrap(),
            "step,mean_reward,mean_ep_len,policy_loss,value_loss,entropy,clip_frac,lr"
        );
        assert_eq!(log.lines().count(), 3);
    }

    #[test]
    fn curiosity_and_discrete_paths_run() {
        let mut c = tiny(2);
        c.sim.action_kind = crate::config::ActionKind::Discrete;
        c.reward.curiosity_enabled = true;
        let c = c.resolve().unwrap();
        let r = train(&c, &TrainOptions::default()).unwrap();
        assert_eq!(r.net.desc.value_heads, 2);
        assert!(r.stats.iter().all(|s| s.entropy.is_finite()));
    }
}
