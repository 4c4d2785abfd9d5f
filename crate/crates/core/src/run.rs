//! Complete configuration of a training/evaluation run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{apply_override, SimConfig};
use crate::error::{Error, Result};
use crate::harness::EvalConfig;
use crate::neural::{Activation, ArchDescriptor};
use crate::ppo::PpoConfig;
use crate::rewards::{RewardConfig, DEFAULT_FORWARD_BIAS_BONUS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_units: usize,
    pub num_layers: usize,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_units: 512,
            num_layers: 2,
            activation: Activation::Swish,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub reward: RewardConfig,
    pub ppo: PpoConfig,
    pub network: NetworkConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parses a config document with dotted `key=value` overrides applied on top.
    pub fn from_json_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut doc, k, v)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::ConfigParse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_with_overrides(&text, overrides)
    }

    /// Fills derived fields from the simulation section and validates.
    pub fn resolve(mut self) -> Result<Self> {
        self.reward.kind = self.sim.reward_kind;
        if !self.sim.forward_bias {
            self.reward.forward_bias_bonus = 0.0;
        } else if self.reward.forward_bias_bonus == 0.0 {
            self.reward.forward_bias_bonus = DEFAULT_FORWARD_BIAS_BONUS;
        }
        if self.ppo.batch_size.is_none() {
            self.ppo.batch_size = Some(self.ppo.batch_size_for(self.sim.action_kind));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.reward.validate()?;
        self.ppo.validate(self.sim.action_kind)?;
        self.arch().validate()?;
        if self.reward.kind != self.sim.reward_kind {
            return Err(Error::InvalidConfig("reward.kind disagrees with sim.reward_kind".into()));
        }
        Ok(())
    }

    pub fn arch(&self) -> ArchDescriptor {
        let mut d = ArchDescriptor::new(
            self.sim.obs_kind,
            self.sim.action_kind,
            self.network.hidden_units,
            self.network.num_layers,
        );
        d.activation = self.network.activation;
        d.value_heads = if self.reward.curiosity_enabled { 2 } else { 1 };
        d
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ActionKind, RewardKind};

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::default().resolve().unwrap();
        assert_eq!(c.ppo.batch_size, Some(4096));
        assert_eq!(c.reward.forward_bias_bonus, 0.0);
    }

    #[test]
    fn overrides_and_sync() {
        let text = r#"{"sim": {"reward_kind": "sparse", "forward_bias": true}}"#;
        let sets = vec![("sim.action_kind".to_string(), "discrete".to_string()), ("ppo.gamma".into(), "0.9".into())];
        let c = RunConfig::from_json_with_overrides(text, &sets).unwrap().resolve().unwrap();
        assert_eq!(c.reward.kind, RewardKind::Sparse);
        assert_eq!(c.sim.action_kind, ActionKind::Discrete);
        assert_eq!(c.ppo.batch_size, Some(256));
        assert_eq!(c.ppo.gamma, 0.9);
        assert_eq!(c.reward.forward_bias_bonus, DEFAULT_FORWARD_BIAS_BONUS);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_json_with_overrides(r#"{"sim": {"arena": 3}}"#, &[]),
            Err(Error::ConfigParse(_))
        ));
        assert!(matches!(RunConfig::from_json_with_overrides("{", &[]), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::default().resolve().unwrap();
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn curiosity_adds_value_head() {
        let mut c = RunConfig::default();
        c.reward.curiosity_enabled = true;
        assert_eq!(c.arch().value_heads, 2);
    }
}
