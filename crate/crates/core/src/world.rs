//! Arena geometry, collectibles, the collect/fetch task state machine and
//! episode termination.

use serde::{Deserialize, Serialize};

use crate::config::{CollectibleKind, SimConfig, Task};
use crate::controller::AgentState;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rng::Rng;

/// Horizontal agent-to-object distance below which an object is collected
/// (and below which the agent counts as home in the fetch task).
pub const COLLECTION_RADIUS: f64 = 1.5;
/// Agents spawn with `‖(x, z) / h‖∞ < AGENT_SPAWN_MARGIN`.
pub const AGENT_SPAWN_MARGIN: f64 = 0.9;
/// Objects spawn with `‖(x, z) / h‖∞ < OBJECT_SPAWN_MARGIN`.
pub const OBJECT_SPAWN_MARGIN: f64 = 0.95;
/// Minimum horizontal distance between a freshly spawned object and the agent.
pub const MIN_SPAWN_DISTANCE: f64 = 3.0;

const MAX_SPAWN_ATTEMPTS: usize = 10_000;

impl CollectibleKind {
    /// Height of the object's center above ground.
    pub fn half_height(self) -> f64 {
        match self {
            CollectibleKind::Cube => 0.5,
            CollectibleKind::Coin => 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collectible {
    pub kind: CollectibleKind,
    pub position: Vec3,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskPhase {
    SeekObject,
    ReturnHome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    None,
    OutOfBounds,
    Timeout,
    TaskComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agent: AgentState,
    pub collectibles: Vec<Collectible>,
    pub task_phase: TaskPhase,
    pub home_pos: Vec3,
    pub step_count: u32,
    pub episode_done: bool,
    pub done_reason: DoneReason,
}

/// What happened during one decision step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub collected_ids: Vec<usize>,
    pub went_out_of_bounds: bool,
    /// Fetch only: the agent brought the object back home.
    pub reached_home: bool,
    pub timed_out: bool,
}

impl StepOutcome {
    /// Number of goal events (collections plus fetch completions).
    pub fn goal_events(&self) -> usize {
        self.collected_ids.len() + usize::from(self.reached_home)
    }
}

/// `(x/h, z/h)` for a position in an arena of half extent `h`.
pub fn normalized_border(pos: Vec3, half_extent: f64) -> (f64, f64) {
    (pos.x / half_extent, pos.z / half_extent)
}

/// True when `‖(x/h, z/h)‖∞ ≥ 1`.
pub fn is_outside(pos: Vec3, half_extent: f64) -> bool {
    let (bx, bz) = normalized_border(pos, half_extent);
    bx.abs().max(bz.abs()) >= 1.0
}

fn sample_interior(rng: &mut Rng, half_extent: f64, margin: f64) -> Result<(f64, f64)> {
    let lim = half_extent * margin;
    loop {
        let x = rng.uniform(-lim, lim)?;
        let z = rng.uniform(-lim, lim)?;
        // the lower bound of the half-open draw is the only point on the margin
        if x.abs() < lim && z.abs() < lim {
            return Ok((x, z));
        }
    }
}

fn spawn_object(rng: &mut Rng, cfg: &SimConfig, agent_pos: Vec3) -> Result<Vec3> {
    let y = cfg.collectible_kind.half_height();
    for _ in 0..MAX_SPAWN_ATTEMPTS {
        let (x, z) = sample_interior(rng, cfg.arena_half_extent, OBJECT_SPAWN_MARGIN)?;
        let p = Vec3::new(x, y, z);
        if p.horizontal_distance(agent_pos) >= MIN_SPAWN_DISTANCE {
            return Ok(p);
        }
    }
    Err(Error::InvalidConfig(format!(
        "arena half extent {} too small to place objects {MIN_SPAWN_DISTANCE} m from the agent",
        cfg.arena_half_extent
    )))
}

/// Starts a fresh episode.
pub fn reset(cfg: &SimConfig, rng: &mut Rng) -> Result<WorldState> {
    cfg.validate()?;
    let (x, z) = sample_interior(rng, cfg.arena_half_extent, AGENT_SPAWN_MARGIN)?;
    let yaw = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI)?;
    let pos = Vec3::new(x, 0.0, z);
    let collectibles = (0..cfg.n_collectibles)
        .map(|_| {
            spawn_object(rng, cfg, pos).map(|position| Collectible {
                kind: cfg.collectible_kind,
                position,
                alive: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WorldState {
        agent: AgentState::at_rest(pos, yaw),
        collectibles,
        task_phase: TaskPhase::SeekObject,
        home_pos: pos,
        step_count: 0,
        episode_done: false,
        done_reason: DoneReason::None,
    })
}

/// Applies the agent's new kinematics and resolves collections, task
/// progress and termination for one decision step.
pub fn world_step(state: &WorldState, agent: AgentState, cfg: &SimConfig, rng: &mut Rng) -> Result<(WorldState, StepOutcome)> {
    if state.episode_done {
        return Err(Error::SteppedTerminalEpisode);
    }
    let mut next = state.clone();
    next.agent = agent;
    next.step_count += 1;
    let mut outcome = StepOutcome::default();
    let mut task_complete = false;
    let pos = next.agent.pos;

    match next.task_phase {
        TaskPhase::SeekObject => {
            for (i, c) in next.collectibles.iter_mut().enumerate() {
                if c.alive && c.position.horizontal_distance(pos) < COLLECTION_RADIUS {
                    c.alive = false;
                    outcome.collected_ids.push(i);
                }
            }
            if !outcome.collected_ids.is_empty() {
                match cfg.task {
                    Task::Fetch => next.task_phase = TaskPhase::ReturnHome,
                    Task::Collect => {
                        if !cfg.respawn_on_collect && next.collectibles.iter().all(|c| !c.alive) {
                            task_complete = true;
                        }
                    }
                }
                if cfg.respawn_on_collect {
                    for &i in &outcome.collected_ids {
                        next.collectibles[i].position = spawn_object(rng, cfg, pos)?;
                        next.collectibles[i].alive = true;
                    }
                }
            }
        }
        TaskPhase::ReturnHome => {
            if next.home_pos.horizontal_distance(pos) < COLLECTION_RADIUS {
                outcome.reached_home = true;
                if cfg.respawn_on_collect {
                    next.task_phase = TaskPhase::SeekObject;
                } else {
                    task_complete = true;
                }
            }
        }
    }

    outcome.went_out_of_bounds = is_outside(pos, cfg.arena_half_extent);
    outcome.timed_out = next.step_count >= cfg.max_episode_steps;

    next.done_reason = if outcome.went_out_of_bounds {
        DoneReason::OutOfBounds
    } else if task_complete {
        DoneReason::TaskComplete
    } else if outcome.timed_out {
        DoneReason::Timeout
    } else {
        DoneReason::None
    };
    next.episode_done = next.done_reason != DoneReason::None;
    Ok((next, outcome))
}

/// Position the agent should currently head for.
pub fn current_target(state: &WorldState) -> Result<Vec3> {
    if state.task_phase == TaskPhase::ReturnHome {
        return Ok(state.home_pos);
    }
    let pos = state.agent.pos;
    state
        .collectibles
        .iter()
        .filter(|c| c.alive)
        .map(|c| (c.position.horizontal_distance(pos), c.position))
        .fold(None, |best: Option<(f64, Vec3)>, cand| match best {
            Some(b) if b.0 <= cand.0 => Some(b),
            _ => Some(cand),
        })
        .map(|(_, p)| p)
        .ok_or(Error::NoTarget)
}

impl WorldState {
    pub fn alive_count(&self) -> usize {
        self.collectibles.iter().filter(|c| c.alive).count()
    }

    /// JSON snapshot for debugging.
    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("WorldState serializes")
    }
}
