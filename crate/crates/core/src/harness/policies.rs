//! Policies the harness can evaluate.

use ndarray::Array2;

use crate::config::{ActionKind, SimConfig};
use crate::controller::{Action, CONTINUOUS_DIM, DISCRETE_BRANCHES};
use crate::env::{Env, Observation};
use crate::error::{Error, Result};
use crate::math::{forward_from_yaw, wrap_angle, Vec3};
use crate::neural::dist::greedy_action;
use crate::neural::PolicyNet;
use crate::rng::Rng;
use crate::world::current_target;

pub trait Policy {
    fn act(&mut self, env: &Env, obs: &Observation) -> Result<Action>;

    /// Checks the policy can drive an environment configured as `sim`.
    fn check(&self, _sim: &SimConfig) -> Result<()> {
        Ok(())
    }
}

/// Trained network, acting greedily.
pub struct GreedyNet {
    pub net: PolicyNet<f32>,
}

impl Policy for GreedyNet {
    fn act(&mut self, _env: &Env, obs: &Observation) -> Result<Action> {
        let x = obs.network_input();
        let x = Array2::from_shape_vec((1, x.len()), x).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(greedy_action(&self.net.forward(x.view())?.row(0)))
    }

    fn check(&self, sim: &SimConfig) -> Result<()> {
        let d = &self.net.desc;
        if d.obs_kind != sim.obs_kind || d.action_kind != sim.action_kind {
            return Err(Error::ArchitectureMismatch(format!(
                "checkpoint is {:?}/{:?}, environment is {:?}/{:?}",
                d.obs_kind, d.action_kind, sim.obs_kind, sim.action_kind
            )));
        }
        Ok(())
    }
}

/// Uniform over the action space.
pub struct RandomPolicy {
    pub kind: ActionKind,
    pub rng: Rng,
}

impl Policy for RandomPolicy {
    fn act(&mut self, _env: &Env, _obs: &Observation) -> Result<Action> {
        Ok(match self.kind {
            ActionKind::Continuous => {
                let mut a = [0.0; CONTINUOUS_DIM];
                for v in &mut a {
                    *v = self.rng.uniform(-1.0, 1.0)?;
                }
                Action::Continuous(a)
            }
            ActionKind::Discrete => {
                let mut a = [0; 4];
                for (v, &n) in a.iter_mut().zip(&DISCRETE_BRANCHES) {
                    *v = self.rng.below(n);
                }
                Action::Discrete(a)
            }
        })
    }
}

/// Steers toward the current target with proportional control. It reads the
/// target from the world directly, so it works with either observation kind.
pub struct Heuristic {
    pub kind: ActionKind,
}

/// Steering command per radian of bearing.
const STEER_GAIN: f64 = 3.0;
/// Lowest commanded forward fraction while turning, kept above the
/// stationary threshold so the faster moving turn rate applies.
const MIN_THROTTLE: f64 = 0.1;

/// Distance kept from the arena edge when braking.
const WALL_MARGIN: f64 = 0.5;

/// Distance along the facing direction to the arena edge.
fn wall_distance(pos: Vec3, yaw: f64, half_extent: f64) -> f64 {
    let f = forward_from_yaw(yaw);
    let along = |p: f64, d: f64| {
        if d > 1e-12 {
            (half_extent - p) / d
        } else if d < -1e-12 {
            (-half_extent - p) / d
        } else {
            f64::INFINITY
        }
    };
    along(pos.x, f.x).min(along(pos.z, f.z))
}

impl Heuristic {
    /// `(throttle in [0, 1], steer in [-1, 1])` toward `target`.
    pub fn command(env: &Env) -> (f64, f64) {
        let s = env.state();
        let target = current_target(s).unwrap_or(s.agent.pos);
        let to = target - s.agent.pos;
        let dist = to.x.hypot(to.z);
        if dist < 1e-9 {
            return (0.0, 0.0);
        }
        let bearing = wrap_angle(to.x.atan2(to.z) - s.agent.yaw);
        let steer = (STEER_GAIN * bearing).clamp(-1.0, 1.0);
        // slow down so the turning circle fits the remaining distance
        let p = &env.sim.controller;
        let omega = p.moving_turn_speed.to_radians();
        let sin_b = bearing.abs().sin();
        let v_fit = if bearing.abs() < std::f64::consts::FRAC_PI_2 && sin_b > 1e-9 {
            omega * dist / (2.0 * sin_b)
        } else if bearing.abs() < std::f64::consts::FRAC_PI_2 {
            f64::INFINITY
        } else {
            0.0
        };
        let throttle = (v_fit / p.forward_velocity_max).clamp(MIN_THROTTLE, 1.0);
        // never carry more speed than can be shed before the arena edge
        let reach = p.velocity_time_constant + env.sim.decision_dt() + 0.1;
        let v_wall = (wall_distance(s.agent.pos, s.agent.yaw, env.sim.arena_half_extent) - WALL_MARGIN).max(0.0) / reach;
        (throttle.min(v_wall / p.forward_velocity_max), steer)
    }
}

impl Policy for Heuristic {
    fn act(&mut self, env: &Env, _obs: &Observation) -> Result<Action> {
        let (throttle, steer) = Self::command(env);
        Ok(match self.kind {
            ActionKind::Continuous => Action::Continuous([throttle, steer, -1.0, -1.0]),
            ActionKind::Discrete => {
                let speeds = env.sim.controller.gait_speeds();
                let want = throttle * env.sim.controller.forward_velocity_max;
                // fastest gait not above the wanted speed
                let mv = if want < 1.0 {
                    1
                } else {
                    (2..speeds.len()).rev().find(|&i| speeds[i] <= want + 1e-9).unwrap_or(2)
                };
                let st = if steer > 0.15 {
                    2
                } else if steer < -0.15 {
                    0
                } else {
                    1
                };
                Action::Discrete([mv, st, 0, 0])
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::RewardConfig;

    #[test]
    fn heuristic_turns_toward_target() {
        let env = Env::new(SimConfig::default(), RewardConfig::default(), Rng::new(3)).unwrap();
        let s = env.state();
        let to = current_target(s).unwrap() - s.agent.pos;
        let bearing = wrap_angle(to.x.atan2(to.z) - s.agent.yaw);
        let (_, steer) = Heuristic::command(&env);
        assert_eq!(steer.signum(), bearing.signum());
    }

    #[test]
    fn random_covers_branches() {
        let env = Env::new(SimConfig::default(), RewardConfig::default(), Rng::new(3)).unwrap();
        let obs = env.observe();
        let mut p = RandomPolicy { kind: ActionKind::Discrete, rng: Rng::new(1) };
        let mut seen = [false; 5];
        for _ in 0..200 {
            if let Action::Discrete(a) = p.act(&env, &obs).unwrap() {
                seen[a[0]] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
