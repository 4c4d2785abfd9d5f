//! Simulation configuration and JSON (de)serialization.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::controller::ControllerParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Collect,
    Fetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectibleKind {
    /// 1 m edge.
    Cube,
    /// 1.5 m diameter.
    Coin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsKind {
    Vector,
    Visual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    PerAction,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Half of the arena side length, meters.
    pub arena_half_extent: f64,
    /// Width of the white ring drawn just inside the arena edge, meters.
    pub border_width: f64,
    /// Physics substep, seconds.
    pub physics_dt: f64,
    /// Physics substeps per decision.
    pub decision_interval: u32,
    /// Decision steps before a timeout.
    pub max_episode_steps: u32,
    pub task: Task,
    pub n_collectibles: u32,
    pub collectible_kind: CollectibleKind,
    pub obs_kind: ObsKind,
    pub action_kind: ActionKind,
    pub reward_kind: RewardKind,
    /// Adds a small bonus for commanding forward motion.
    pub forward_bias: bool,
    /// Masks backward motion.
    pub forward_only: bool,
    /// Collected objects respawn instead of disappearing (evaluation scene).
    pub respawn_on_collect: bool,
    pub seed: u64,
    pub controller: ControllerParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            arena_half_extent: 55.0,
            border_width: 1.0,
            physics_dt: 0.02,
            decision_interval: 5,
            max_episode_steps: 5000,
            task: Task::Collect,
            n_collectibles: 1,
            collectible_kind: CollectibleKind::Cube,
            obs_kind: ObsKind::Vector,
            action_kind: ActionKind::Continuous,
            reward_kind: RewardKind::PerAction,
            forward_bias: false,
            forward_only: false,
            respawn_on_collect: false,
            seed: 0,
            controller: ControllerParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.arena_half_extent > 0.0) || !self.arena_half_extent.is_finite() {
            return bad("arena_half_extent must be > 0");
        }
        if !(self.border_width >= 0.0 && self.border_width < self.arena_half_extent) {
            return bad("border_width must be in [0, arena_half_extent)");
        }
        if !(self.physics_dt > 0.0) || !self.physics_dt.is_finite() {
            return bad("physics_dt must be > 0");
        }
        if self.decision_interval < 1 {
            return bad("decision_interval must be >= 1");
        }
        if self.max_episode_steps < 1 {
            return bad("max_episode_steps must be >= 1");
        }
        if self.n_collectibles < 1 {
            return bad("n_collectibles must be >= 1");
        }
        self.controller.validate()
    }

    /// Seconds of simulated time per decision step.
    pub fn decision_dt(&self) -> f64 {
        self.physics_dt * self.decision_interval as f64
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("SimConfig serializes")
    }
}

/// Sets `key` (dot-separated path) inside a JSON document to `raw`.
///
/// `raw` is parsed as JSON when possible and otherwise taken as a string, so
/// `sim.task=fetch` and `ppo.learning_rate=1e-3` both work. Intermediate
/// objects are created as needed; unknown leaf keys are caught later by the
/// typed deserializer.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::ConfigParse(format!("malformed override key `{key}`")));
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::ConfigParse(format!("`{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        let back = SimConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.arena_half_extent, 55.0);
        assert_eq!(cfg.border_width, 1.0);
        assert_eq!(cfg.max_episode_steps, 5000);
        assert!((cfg.decision_dt() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_document_takes_defaults() {
        assert_eq!(SimConfig::from_json("{}").unwrap(), SimConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = SimConfig::from_json(r#"{"arena_half_extent": 20, "bogus_key": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = SimConfig::from_json(r#"{"controller": {"warp_speed": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("warp_speed"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for doc in [
            r#"{"arena_half_extent": 0}"#,
            r#"{"n_collectibles": 0}"#,
            r#"{"max_episode_steps": 0}"#,
            r#"{"physics_dt": 0}"#,
            r#"{"decision_interval": 0}"#,
            r#"{"controller": {"forward_velocity_max": -1}}"#,
        ] {
            assert!(SimConfig::from_json(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn overrides_parse_json_or_string() {
        let mut doc = serde_json::json!({"sim": {"task": "collect"}});
        apply_override(&mut doc, "sim.task", "fetch").unwrap();
        apply_override(&mut doc, "sim.arena_half_extent", "20").unwrap();
        apply_override(&mut doc, "ppo.learning_rate", "1e-3").unwrap();
        assert_eq!(doc["sim"]["task"], "fetch");
        assert_eq!(doc["sim"]["arena_half_extent"], 20);
        assert_eq!(doc["ppo"]["learning_rate"], 1e-3);
        assert!(apply_override(&mut doc, "sim..x", "1").is_err());
        assert!(apply_override(&mut doc, "sim.task.inner", "1").is_err());
    }
}
