//! Standardized evaluation (Score / Reset), baseline policies and
//! learning-curve comparison.

pub mod compare;
pub mod policies;
pub mod svg;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::rewards::RewardConfig;
use crate::rng::Rng;
use crate::world::DoneReason;

pub use compare::{compare_runs, Comparison, RunCurve};
pub use policies::{GreedyNet, Heuristic, Policy, RandomPolicy};

/// Stream id of the evaluation environment.
const EVAL_STREAM: u64 = 5 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Checkpoint,
    Random,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Overrides the simulation's collectible count when set.
    pub n_collectibles: Option<u32>,
    /// Overrides the simulation's arena when set.
    pub arena_half_extent: Option<f64>,
    pub max_episodes: u64,
    pub max_steps: u64,
    pub policy: PolicyKind,
    pub record_traces: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_collectibles: None,
            arena_half_extent: None,
            max_episodes: 200,
            max_steps: 1_000_000,
            policy: PolicyKind::Checkpoint,
            record_traces: false,
            seed: 0,
        }
    }
}

impl EvalConfig {
    /// Simulation used for evaluation: overrides applied, respawn on.
    pub fn eval_sim(&self, sim: &SimConfig) -> SimConfig {
        let mut s = sim.clone();
        if let Some(n) = self.n_collectibles {
            s.n_collectibles = n;
        }
        if let Some(h) = self.arena_half_extent {
            s.arena_half_extent = h;
        }
        s.respawn_on_collect = true;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub collected: u64,
    pub fetch_completions: u64,
    pub length: u64,
    pub reward: f64,
    pub reason: DoneReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Objects collected over all episodes.
    pub score: u64,
    pub fetch_completions: u64,
    /// Out-of-bounds terminations.
    pub resets: u64,
    /// Episodes run, including one cut short by the step cap.
    pub episodes: u64,
    pub steps: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub traces: Option<Vec<EpisodeTrace>>,
}

/// Runs `policy` until the episode or step cap, whichever comes first.
pub fn evaluate(eval: &EvalConfig, sim: &SimConfig, reward: &RewardConfig, policy: &mut dyn Policy) -> Result<EvalReport> {
    let sim = eval.eval_sim(sim);
    sim.validate()?;
    policy.check(&sim)?;
    let mut report = EvalReport::default();
    let mut traces = Vec::new();
    if eval.max_episodes == 0 || eval.max_steps == 0 {
        report.traces = eval.record_traces.then_some(traces);
        return Ok(report);
    }
    let mut env = Env::new(sim, reward.clone(), Rng::for_instance(eval.seed, EVAL_STREAM))?;
    let mut obs = env.observe();
    let mut cur = EpisodeTrace { collected: 0, fetch_completions: 0, length: 0, reward: 0.0, reason: DoneReason::None };
    while report.steps < eval.max_steps {
        let action = policy.act(&env, &obs)?;
        let t = env.step(&action)?;
        report.steps += 1;
        cur.length += 1;
        cur.collected += t.outcome.collected_ids.len() as u64;
        cur.fetch_completions += t.outcome.reached_home as u64;
        cur.reward += t.reward.total;
        obs = t.obs;
        if t.done {
            cur.reason = t.reason;
            finish(&mut report, &mut traces, &mut cur);
            if report.episodes >= eval.max_episodes {
                break;
            }
        }
    }
    if cur.length > 0 {
        finish(&mut report, &mut traces, &mut cur);
    }
    report.traces = eval.record_traces.then_some(traces);
    Ok(report)
}

fn finish(report: &mut EvalReport, traces: &mut Vec<EpisodeTrace>, cur: &mut EpisodeTrace) {
    report.episodes += 1;
    report.score += cur.collected;
    report.fetch_completions += cur.fetch_completions;
    report.resets += (cur.reason == DoneReason::OutOfBounds) as u64;
    traces.push(*cur);
    *cur = EpisodeTrace { collected: 0, fetch_completions: 0, length: 0, reward: 0.0, reason: DoneReason::None };
}

/// Builds the baseline policy named by `kind`; checkpoints are loaded by the caller.
pub fn baseline(kind: PolicyKind, sim: &SimConfig, seed: u64) -> Result<Box<dyn Policy>> {
    match kind {
        PolicyKind::Random => Ok(Box::new(RandomPolicy { kind: sim.action_kind, rng: Rng::for_instance(seed, EVAL_STREAM + 1) })),
        PolicyKind::Heuristic => Ok(Box::new(Heuristic { kind: sim.action_kind })),
        PolicyKind::Checkpoint => Err(Error::InvalidConfig("checkpoint policy needs a checkpoint file".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ActionKind, ObsKind};
    use crate::neural::{ArchDescriptor, PolicyNet};

    fn eval(steps: u64) -> EvalConfig {
        EvalConfig { max_steps: steps, record_traces: true, ..Default::default() }
    }

    #[test]
    fn zero_episodes_is_empty() {
        let e = EvalConfig { max_episodes: 0, ..Default::default() };
        let mut p = Heuristic { kind: ActionKind::Continuous };
        let r = evaluate(&e, &SimConfig::default(), &RewardConfig::default(), &mut p).unwrap();
        assert_eq!((r.score, r.episodes, r.steps), (0, 0, 0));
    }

    #[test]
    fn heuristic_beats_random_and_never_resets() {
        let sim = SimConfig::default();
        let rc = RewardConfig::default();
        let mut h = Heuristic { kind: ActionKind::Continuous };
        let hr = evaluate(&eval(20_000), &sim, &rc, &mut h).unwrap();
        let mut rp = RandomPolicy { kind: ActionKind::Continuous, rng: Rng::new(1) };
        let rr = evaluate(&eval(20_000), &sim, &rc, &mut rp).unwrap();
        assert_eq!(hr.resets, 0);
        assert!(hr.score >= 50 * rr.score.max(1), "heuristic {} random {}", hr.score, rr.score);
    }

    #[test]
    fn discrete_heuristic_collects() {
        let sim = SimConfig { action_kind: ActionKind::Discrete, arena_half_extent: 20.0, ..Default::default() };
        let mut h = Heuristic { kind: ActionKind::Discrete };
        let r = evaluate(&eval(5_000), &sim, &RewardConfig::default(), &mut h).unwrap();
        assert!(r.score > 50, "{}", r.score);
        assert_eq!(r.resets, 0);
    }

    #[test]
    fn totals_equal_trace_sums() {
        let sim = SimConfig { arena_half_extent: 15.0, max_episode_steps: 300, ..Default::default() };
        let mut rp = RandomPolicy { kind: ActionKind::Continuous, rng: Rng::new(4) };
        let r = evaluate(&eval(3_000), &sim, &RewardConfig::default(), &mut rp).unwrap();
        let t = r.traces.as_ref().unwrap();
        assert_eq!(r.episodes as usize, t.len());
        assert_eq!(r.score, t.iter().map(|x| x.collected).sum::<u64>());
        assert_eq!(r.steps, t.iter().map(|x| x.length).sum::<u64>());
        assert_eq!(r.resets, t.iter().filter(|x| x.reason == DoneReason::OutOfBounds).count() as u64);
        assert!(r.resets <= r.episodes);
    }

    #[test]
    fn episode_cap_stops_early() {
        let sim = SimConfig { max_episode_steps: 10, ..Default::default() };
        let e = EvalConfig { max_episodes: 3, ..Default::default() };
        let mut h = Heuristic { kind: ActionKind::Continuous };
        let r = evaluate(&e, &sim, &RewardConfig::default(), &mut h).unwrap();
        assert_eq!(r.episodes, 3);
        assert_eq!(r.steps, 30);
    }

    #[test]
    fn mismatched_checkpoint_rejected() {
        let desc = ArchDescriptor::new(ObsKind::Vector, ActionKind::Discrete, 4, 1);
        let mut p = GreedyNet { net: PolicyNet::new(&desc, &mut Rng::new(0)).unwrap() };
        let r = evaluate(&eval(10), &SimConfig::default(), &RewardConfig::default(), &mut p);
        assert!(matches!(r, Err(Error::ArchitectureMismatch(_))));
    }

    #[test]
    fn deterministic() {
        let sim = SimConfig { arena_half_extent: 20.0, ..Default::default() };
        let run = || {
            let mut rp = RandomPolicy { kind: ActionKind::Continuous, rng: Rng::new(9) };
            evaluate(&eval(2_000), &sim, &RewardConfig::default(), &mut rp).unwrap()
        };
        assert_eq!(run(), run());
    }
}
