//! Heuristic low-level character controller.
//!
//! Policies never touch positions directly: they emit a small command
//! (speed, steer, jump, crouch) which this module turns into kinematic motion
//! under fixed turn-speed, velocity, jump and gravity limits.

use serde::{Deserialize, Serialize};

use crate::config::ActionKind;
use crate::error::{Error, Result};
use crate::math::{forward_from_yaw, Vec3};

pub const GRAVITY: f64 = 9.81;

/// Branch cardinalities of the discrete action space: move, steer, jump, crouch.
pub const DISCRETE_BRANCHES: [usize; 4] = [5, 3, 2, 2];
/// Number of continuous action components.
pub const CONTINUOUS_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    /// Degrees per second while moving.
    pub moving_turn_speed: f64,
    /// Degrees per second while stationary.
    pub stationary_turn_speed: f64,
    /// Vertical takeoff velocity, m/s.
    pub jump_power: f64,
    pub forward_velocity_max: f64,
    pub backward_velocity_max: f64,
    pub gravity_multiplier: f64,
    /// Inert: the controller is kinematic and plays no animations.
    pub anim_speed_multiplier: f64,
    /// Continuous jump fires when `j > jump_threshold`.
    pub jump_threshold: f64,
    /// Continuous crouch fires when `c > crouch_threshold` (and no jump).
    pub crouch_threshold: f64,
    /// First-order velocity smoothing time constant, seconds. 0 disables smoothing.
    pub velocity_time_constant: f64,
    pub walk_speed: f64,
    pub trot_speed: f64,
    /// Below this horizontal speed the agent counts as stationary.
    pub stationary_speed: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            moving_turn_speed: 45.0,
            stationary_turn_speed: 30.0,
            jump_power: 5.0,
            forward_velocity_max: 9.0,
            backward_velocity_max: 2.0,
            gravity_multiplier: 1.0,
            anim_speed_multiplier: 1.0,
            jump_threshold: 0.5,
            crouch_threshold: 0.5,
            velocity_time_constant: 0.25,
            walk_speed: 3.0,
            trot_speed: 6.0,
            stationary_speed: 0.1,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        let speeds = [
            ("moving_turn_speed", self.moving_turn_speed),
            ("stationary_turn_speed", self.stationary_turn_speed),
            ("jump_power", self.jump_power),
            ("forward_velocity_max", self.forward_velocity_max),
            ("backward_velocity_max", self.backward_velocity_max),
            ("gravity_multiplier", self.gravity_multiplier),
            ("velocity_time_constant", self.velocity_time_constant),
            ("walk_speed", self.walk_speed),
            ("trot_speed", self.trot_speed),
            ("stationary_speed", self.stationary_speed),
        ];
        for (name, v) in speeds {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("controller.{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Signed speed for each discrete movement index: backward, none, walk, trot, run.
    pub fn gait_speeds(&self) -> [f64; 5] {
        [
            -self.backward_velocity_max,
            0.0,
            self.walk_speed,
            self.trot_speed,
            self.forward_velocity_max,
        ]
    }
}

/// Decoded request handed to [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    /// Signed target speed along the facing direction, m/s.
    pub target_speed: f64,
    /// -1 full left, +1 full right.
    pub steer: f64,
    pub jump: bool,
    pub crouch: bool,
}

impl ActionCommand {
    pub const IDLE: ActionCommand = ActionCommand {
        target_speed: 0.0,
        steer: 0.0,
        jump: false,
        crouch: false,
    };
}

/// A policy action in either encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Continuous([f64; CONTINUOUS_DIM]),
    Discrete([usize; 4]),
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Continuous(_) => ActionKind::Continuous,
            Action::Discrete(_) => ActionKind::Discrete,
        }
    }
}

pub fn decode(action: &Action, params: &ControllerParams, forward_only: bool) -> Result<ActionCommand> {
    match action {
        Action::Continuous(raw) => Ok(decode_continuous(*raw, params, forward_only)),
        Action::Discrete(b) => decode_discrete(*b, params, forward_only),
    }
}

/// Decodes `(move, steer, jump, crouch)`, each clamped to `[-1, 1]` first.
pub fn decode_continuous(raw: [f64; CONTINUOUS_DIM], params: &ControllerParams, forward_only: bool) -> ActionCommand {
    let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
    let mut f = clamp(raw[0]);
    if forward_only {
        f = f.max(0.0);
    }
    let target_speed = if f >= 0.0 {
        f * params.forward_velocity_max
    } else {
        f * params.backward_velocity_max
    };
    let jump = clamp(raw[2]) > params.jump_threshold;
    let crouch = clamp(raw[3]) > params.crouch_threshold && !jump;
    ActionCommand {
        target_speed,
        steer: clamp(raw[1]),
        jump,
        crouch,
    }
}

/// Decodes branch indices `(move 0..5, steer 0..3, jump 0..2, crouch 0..2)`.
///
/// Movement is backward/none/walk/trot/run, steering left/none/right; index 1
/// of the jump and crouch branches means "true".
pub fn decode_discrete(branches: [usize; 4], params: &ControllerParams, forward_only: bool) -> Result<ActionCommand> {
    const NAMES: [&str; 4] = ["move", "steer", "jump", "crouch"];
    for (i, (&idx, &card)) in branches.iter().zip(DISCRETE_BRANCHES.iter()).enumerate() {
        if idx >= card {
            return Err(Error::IndexOutOfRange {
                branch: NAMES[i],
                index: idx,
                cardinality: card,
            });
        }
    }
    let mut mv = branches[0];
    if forward_only && mv == 0 {
        mv = 1;
    }
    let jump = branches[2] == 1;
    Ok(ActionCommand {
        target_speed: params.gait_speeds()[mv],
        steer: branches[1] as f64 - 1.0,
        jump,
        crouch: branches[3] == 1 && !jump,
    })
}

/// Kinematic state of the agent body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Arena-centered position; y is height of the feet above ground.
    pub pos: Vec3,
    /// Radians about +y.
    pub yaw: f64,
    /// World-frame velocity, m/s.
    pub vel: Vec3,
    /// World-frame angular velocity, rad/s.
    pub ang_vel: Vec3,
    pub airborne: bool,
    pub crouching: bool,
}

impl AgentState {
    pub fn at_rest(pos: Vec3, yaw: f64) -> Self {
        Self {
            pos,
            yaw,
            vel: Vec3::ZERO,
            ang_vel: Vec3::ZERO,
            airborne: false,
            crouching: false,
        }
    }

    pub fn forward(&self) -> Vec3 {
        forward_from_yaw(self.yaw)
    }

    /// Signed horizontal speed along the facing direction.
    pub fn forward_speed(&self) -> f64 {
        let f = self.forward();
        self.vel.x * f.x + self.vel.z * f.z
    }
}

/// Advances the agent by `n_substeps` physics steps of `dt` seconds under `cmd`.
pub fn integrate(state: &AgentState, cmd: &ActionCommand, params: &ControllerParams, dt: f64, n_substeps: u32) -> AgentState {
    debug_assert!(dt > 0.0);
    let mut s = *state;
    let mut target = cmd
        .target_speed
        .clamp(-params.backward_velocity_max, params.forward_velocity_max);
    if cmd.crouch {
        target = target.clamp(-params.walk_speed, params.walk_speed);
    }
    let steer = cmd.steer.clamp(-1.0, 1.0);
    let blend = if params.velocity_time_constant > 0.0 {
        1.0 - (-dt / params.velocity_time_constant).exp()
    } else {
        1.0
    };
    let g = GRAVITY * params.gravity_multiplier;
    s.crouching = cmd.crouch;

    for _ in 0..n_substeps {
        let mut speed = s.forward_speed();
        let turn_deg = if speed.abs() > params.stationary_speed {
            params.moving_turn_speed
        } else {
            params.stationary_turn_speed
        };
        let yaw_rate = steer * turn_deg.to_radians();
        s.yaw += yaw_rate * dt;
        s.ang_vel = Vec3::new(0.0, yaw_rate, 0.0);

        speed += (target - speed) * blend;
        let f = s.forward();
        s.vel.x = speed * f.x;
        s.vel.z = speed * f.z;

        if s.airborne {
            s.vel.y -= g * dt;
            s.pos.y += s.vel.y * dt;
            if s.pos.y <= 0.0 {
                s.pos.y = 0.0;
                s.vel.y = 0.0;
                s.airborne = false;
            }
        }
        if !s.airborne && cmd.jump && params.jump_power > 0.0 {
            s.vel.y = params.jump_power;
            s.airborne = true;
        }
        s.pos.x += s.vel.x * dt;
        s.pos.z += s.vel.z * dt;
    }
    s.yaw = crate::math::wrap_angle(s.yaw);
    s
}
