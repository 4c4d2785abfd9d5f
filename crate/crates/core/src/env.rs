//! Single environment instance: decode → integrate → world step → reward →
//! observe, with automatic reset at episode end.

use crate::config::{ObsKind, SimConfig};
use crate::controller::{decode, integrate, Action, ActionCommand};
use crate::error::Result;
use crate::neural::policy::vector_input;
use crate::rewards::{step_reward, RewardBreakdown, RewardConfig};
use crate::rng::Rng;
use crate::sensors::camera::CameraRig;
use crate::sensors::{observe_vector_or_forward, observe_visual, EmbodiedView, ObservationImg, ObservationVec};
use crate::world::{current_target, reset, world_step, DoneReason, StepOutcome, WorldState};

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Vector(ObservationVec),
    Visual(ObservationImg),
}

impl Observation {
    /// Row fed to the network.
    pub fn network_input(&self) -> Vec<f32> {
        match self {
            Observation::Vector(o) => vector_input(o.as_slice()),
            Observation::Visual(img) => img.as_slice().to_vec(),
        }
    }
}

/// Totals for a finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub length: u32,
    pub collected: u32,
    pub fetch_completions: u32,
    pub reason: DoneReason,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub command: ActionCommand,
    pub reward: RewardBreakdown,
    pub outcome: StepOutcome,
    /// The episode ended on this step (any reason).
    pub done: bool,
    pub reason: DoneReason,
    /// Observation of the state just reached, before any reset.
    pub terminal_obs: Option<Observation>,
    /// Observation the policy acts on next (post-reset when `done`).
    pub obs: Observation,
    pub episode: Option<EpisodeSummary>,
}

#[derive(Debug, Clone)]
pub struct Env {
    pub sim: SimConfig,
    pub reward: RewardConfig,
    pub rig: CameraRig,
    state: WorldState,
    rng: Rng,
    ep_reward: f64,
    ep_collected: u32,
    ep_fetches: u32,
}

impl Env {
    pub fn new(sim: SimConfig, reward: RewardConfig, mut rng: Rng) -> Result<Self> {
        reward.validate()?;
        let state = reset(&sim, &mut rng)?;
        Ok(Self {
            sim,
            reward,
            rig: CameraRig::default(),
            state,
            rng,
            ep_reward: 0.0,
            ep_collected: 0,
            ep_fetches: 0,
        })
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, &self.sim, &self.rig)
    }

    pub fn step(&mut self, action: &Action) -> Result<Transition> {
        let command = decode(action, &self.sim.controller, self.sim.forward_only)?;
        self.step_command(command)
    }

    pub fn step_command(&mut self, command: ActionCommand) -> Result<Transition> {
        let prev = &self.state;
        let target = current_target(prev).unwrap_or(prev.agent.pos);
        let agent = integrate(
            &prev.agent,
            &command,
            &self.sim.controller,
            self.sim.physics_dt,
            self.sim.decision_interval,
        );
        let (next, outcome) = world_step(prev, agent, &self.sim, &mut self.rng)?;
        let reward = step_reward(prev, &command, &outcome, &next, target, &self.reward);
        self.ep_reward += reward.total;
        self.ep_collected += outcome.collected_ids.len() as u32;
        self.ep_fetches += outcome.reached_home as u32;
        self.state = next;

        let done = self.state.episode_done;
        let reason = self.state.done_reason;
        let mut terminal_obs = None;
        let mut episode = None;
        if done {
            terminal_obs = Some(self.observe());
            episode = Some(EpisodeSummary {
                reward: self.ep_reward,
                length: self.state.step_count,
                collected: self.ep_collected,
                fetch_completions: self.ep_fetches,
                reason,
            });
            self.reset()?;
        }
        Ok(Transition {
            command,
            reward,
            outcome,
            done,
            reason,
            terminal_obs,
            obs: self.observe(),
            episode,
        })
    }

    pub fn reset(&mut self) -> Result<()> {
        self.state = reset(&self.sim, &mut self.rng)?;
        self.ep_reward = 0.0;
        self.ep_collected = 0;
        self.ep_fetches = 0;
        Ok(())
    }
}

pub fn observe(state: &WorldState, sim: &SimConfig, rig: &CameraRig) -> Observation {
    match sim.obs_kind {
        ObsKind::Vector => {
            let target = current_target(state).unwrap_or(state.agent.pos);
            Observation::Vector(observe_vector_or_forward(state, target, sim))
        }
        ObsKind::Visual => Observation::Visual(observe_visual(&EmbodiedView::of(state, sim), rig)),
    }
}
