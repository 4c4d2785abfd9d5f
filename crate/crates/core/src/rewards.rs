//! Per-decision-step reward.

use serde::{Deserialize, Serialize};

use crate::config::RewardKind;
use crate::controller::ActionCommand;
use crate::error::{Error, Result};
use crate::math::{normalize, Vec3};
use crate::world::{StepOutcome, WorldState};

/// Bonus per step used when forward bias is switched on without an explicit magnitude.
pub const DEFAULT_FORWARD_BIAS_BONUS: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub kind: RewardKind,
    pub per_action_scale: f64,
    pub goal_reward: f64,
    pub out_of_bounds_reward: f64,
    pub time_penalty: f64,
    /// Paid whenever the commanded speed is positive.
    pub forward_bias_bonus: f64,
    pub curiosity_enabled: bool,
    pub curiosity_strength: f64,
    pub curiosity_gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            kind: RewardKind::PerAction,
            per_action_scale: 0.01,
            goal_reward: 1.0,
            out_of_bounds_reward: -1.0,
            time_penalty: -0.0005,
            forward_bias_bonus: 0.0,
            curiosity_enabled: false,
            curiosity_strength: 0.1,
            curiosity_gamma: 0.99,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("reward: {m}")));
        if !(self.time_penalty <= 0.0) {
            return bad("time_penalty must be <= 0");
        }
        if !(self.goal_reward > 0.0) {
            return bad("goal_reward must be > 0");
        }
        if !(self.out_of_bounds_reward < 0.0) {
            return bad("out_of_bounds_reward must be < 0");
        }
        if !(self.forward_bias_bonus >= 0.0) || !(self.curiosity_strength >= 0.0) {
            return bad("forward_bias_bonus and curiosity_strength must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.curiosity_gamma) || !self.per_action_scale.is_finite() {
            return bad("curiosity_gamma must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub shaped: f64,
    pub sparse: f64,
    pub time: f64,
    pub boundary: f64,
    pub forward_bias: f64,
    pub curiosity: f64,
    pub total: f64,
}

impl RewardBreakdown {
    fn sum(&self) -> f64 {
        self.shaped + self.sparse + self.time + self.boundary + self.forward_bias + self.curiosity
    }

    /// Same breakdown with the curiosity term replaced.
    pub fn with_curiosity(mut self, curiosity: f64) -> Self {
        self.curiosity = curiosity;
        self.total = self.sum();
        self
    }

    pub const CSV_HEADER: &'static str = "shaped,sparse,time,boundary,forward_bias,curiosity,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.shaped, self.sparse, self.time, self.boundary, self.forward_bias, self.curiosity, self.total
        )
    }
}

/// Extrinsic reward for the transition `prev → state`.
///
/// `target` is what the agent was heading for at `prev`; the shaping term
/// projects the new velocity on the direction from the old position to it.
pub fn step_reward(
    prev: &WorldState,
    cmd: &ActionCommand,
    outcome: &StepOutcome,
    state: &WorldState,
    target: Vec3,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let events = outcome.goal_events() as f64;
    let mut r = RewardBreakdown {
        time: cfg.time_penalty,
        ..Default::default()
    };
    match cfg.kind {
        RewardKind::PerAction if events > 0.0 => r.sparse = cfg.goal_reward * events,
        RewardKind::PerAction => {
            // sitting exactly on the target leaves no direction to reward
            if let Ok(d) = normalize(target - prev.agent.pos) {
                r.shaped = cfg.per_action_scale * state.agent.vel.dot(d);
            }
        }
        RewardKind::Sparse => r.sparse = cfg.goal_reward * events,
    }
    if outcome.went_out_of_bounds {
        r.boundary = cfg.out_of_bounds_reward;
    }
    if cmd.target_speed > 0.0 {
        r.forward_bias = cfg.forward_bias_bonus;
    }
    r.total = r.sum();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::rng::Rng;
    use crate::world::reset;
    use proptest::prelude::*;

    fn states(vel: Vec3) -> (WorldState, WorldState) {
        let prev = reset(&SimConfig::default(), &mut Rng::new(1)).unwrap();
        let mut next = prev.clone();
        next.agent.vel = vel;
        (prev, next)
    }

    fn run() -> ActionCommand {
        ActionCommand { target_speed: 9.0, ..ActionCommand::IDLE }
    }

    #[test]
    fn full_speed_toward_target() {
        let (prev, next) = states(Vec3::new(9.0, 0.0, 0.0));
        let target = prev.agent.pos + Vec3::new(10.0, 0.0, 0.0);
        let r = step_reward(&prev, &run(), &StepOutcome::default(), &next, target, &RewardConfig::default());
        assert!((r.shaped - 0.09).abs() < 1e-15);
        assert!((r.total - 0.0895).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_velocity_unshaped() {
        let (prev, next) = states(Vec3::new(0.0, 0.0, 4.0));
        let target = prev.agent.pos + Vec3::new(3.0, 0.0, 0.0);
        let r = step_reward(&prev, &run(), &StepOutcome::default(), &next, target, &RewardConfig::default());
        assert_eq!(r.shaped, 0.0);
    }

    #[test]
    fn sparse_collection() {
        let (prev, next) = states(Vec3::new(5.0, 0.0, 0.0));
        let out = StepOutcome { collected_ids: vec![0], ..Default::default() };
        let cfg = RewardConfig { kind: RewardKind::Sparse, ..Default::default() };
        let r = step_reward(&prev, &run(), &out, &next, Vec3::ZERO, &cfg);
        assert_eq!(r.sparse, 1.0);
        assert!((r.total - 0.9995).abs() < 1e-15);
    }

    #[test]
    fn goal_replaces_shaping_under_per_action() {
        let (prev, next) = states(Vec3::new(9.0, 0.0, 0.0));
        let target = prev.agent.pos + Vec3::new(1.0, 0.0, 0.0);
        let out = StepOutcome { collected_ids: vec![0], ..Default::default() };
        let r = step_reward(&prev, &run(), &out, &next, target, &RewardConfig::default());
        assert_eq!((r.shaped, r.sparse), (0.0, 1.0));
    }

    #[test]
    fn boundary_and_bias() {
        let (prev, next) = states(Vec3::ZERO);
        let out = StepOutcome { went_out_of_bounds: true, ..Default::default() };
        let cfg = RewardConfig { forward_bias_bonus: 0.002, ..Default::default() };
        let r = step_reward(&prev, &run(), &out, &next, prev.agent.pos, &cfg);
        assert_eq!(r.boundary, -1.0);
        assert_eq!(r.forward_bias, 0.002);
        assert_eq!(r.shaped, 0.0);
        let idle = step_reward(&prev, &ActionCommand::IDLE, &out, &next, prev.agent.pos, &cfg);
        assert_eq!(idle.forward_bias, 0.0);
    }

    #[test]
    fn episode_time_budget() {
        let total: f64 = (0..5000).map(|_| RewardConfig::default().time_penalty).sum();
        assert!((total + 2.5).abs() < 1e-9);
        let with_goal = total + 1.0;
        assert!(with_goal > -3.5 && with_goal <= 1.0);
    }

    #[test]
    fn validation() {
        assert!(RewardConfig::default().validate().is_ok());
        assert!(RewardConfig { time_penalty: 0.1, ..Default::default() }.validate().is_err());
        assert!(RewardConfig { goal_reward: 0.0, ..Default::default() }.validate().is_err());
        assert!(RewardConfig { out_of_bounds_reward: 0.5, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn shaping_is_antisymmetric_and_bounded(vx in -9.0..9.0f64, vz in -9.0..9.0f64, tx in -50.0..50.0f64, tz in -50.0..50.0f64) {
            let v = Vec3::new(vx, 0.0, vz);
            let speed = v.norm();
            let v = if speed > 9.0 { v * (9.0 / speed) } else { v };
            let (prev, a) = states(v);
            let (_, b) = states(-v);
            let target = Vec3::new(tx, 0.5, tz);
            let cfg = RewardConfig::default();
            let ra = step_reward(&prev, &run(), &StepOutcome::default(), &a, target, &cfg);
            let rb = step_reward(&prev, &run(), &StepOutcome::default(), &b, target, &cfg);
            prop_assert_eq!(ra.shaped, -rb.shaped);
            prop_assert!(ra.shaped.abs() <= 0.09 + 1e-12);
        }

        #[test]
        fn total_is_sum(vx in -9.0..9.0f64, oob: bool, events in 0usize..3, sparse: bool, bias in 0.0..0.01f64) {
            let (prev, next) = states(Vec3::new(vx, 0.0, 1.0));
            let out = StepOutcome { collected_ids: (0..events).collect(), went_out_of_bounds: oob, ..Default::default() };
            let kind = if sparse { RewardKind::Sparse } else { RewardKind::PerAction };
            let cfg = RewardConfig { kind, forward_bias_bonus: bias, ..Default::default() };
            let r = step_reward(&prev, &run(), &out, &next, Vec3::new(3.0, 0.5, -2.0), &cfg).with_curiosity(0.3);
            prop_assert_eq!(r.total, r.shaped + r.sparse + r.time + r.boundary + r.forward_bias + r.curiosity);
        }
    }
}
