//! Session configuration: every tunable in one TOML document with
//! `[aoi]`, `[thermal]`, `[dm]` and `[agents]` sections.
//!
//! Scalar fields can be overridden from the environment as
//! `RAVE_<SECTION>_<FIELD>`, e.g. `RAVE_DM_IDLE_TIMEOUT_MS=5000`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{Agent, AgentCatalog, AgentError};
use crate::dm::DmConfig;
use crate::gaze::{GazeError, Rect};
use crate::{AoiGeometry, GazeParams, ThermalParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("environment override {var}: {reason}")]
    Env { var: String, reason: String },
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoiConfig {
    pub robot: Rect<f64>,
    pub avatar: Rect<f64>,
    pub in_between: Rect<f64>,
    pub sample_rate_hz: f64,
    pub window_ms: u64,
    pub window_samples: usize,
    pub min_valid_fraction: f64,
    pub fixation_containment: f64,
    pub fixation_max_dispersion: f64,
}

impl Default for AoiConfig {
    fn default() -> Self {
        let g = AoiGeometry::default_layout();
        let p = GazeParams::default();
        Self {
            robot: g.robot,
            avatar: g.avatar,
            in_between: g.in_between,
            sample_rate_hz: p.sample_rate_hz,
            window_ms: p.window_ms,
            window_samples: p.window_samples,
            min_valid_fraction: p.min_valid_fraction,
            fixation_containment: p.fixation_containment,
            fixation_max_dispersion: p.fixation_max_dispersion,
        }
    }
}

impl AoiConfig {
    pub fn geometry(&self) -> Result<AoiGeometry, GazeError> {
        AoiGeometry::new(self.robot, self.avatar, self.in_between)
    }

    pub fn params(&self) -> GazeParams {
        GazeParams {
            sample_rate_hz: self.sample_rate_hz,
            window_ms: self.window_ms,
            window_samples: self.window_samples,
            min_valid_fraction: self.min_valid_fraction,
            fixation_containment: self.fixation_containment,
            fixation_max_dispersion: self.fixation_max_dispersion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub nucleus_hz: f64,
    pub rhyme_padding_ms: f64,
    /// Duration overrides keyed `"<Agent>.<Behavior>"`, e.g. `"Robot.Nod"`.
    pub durations: BTreeMap<String, u64>,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        let c = AgentCatalog::default();
        Self { nucleus_hz: c.nucleus_hz, rhyme_padding_ms: c.rhyme_padding_ms, durations: BTreeMap::new() }
    }
}

impl AgentsConfig {
    /// The shipped catalog with this section's overrides applied.
    pub fn catalog(&self) -> Result<AgentCatalog, AgentError> {
        let mut c = AgentCatalog::default();
        c.set_rhyme_timing(self.nucleus_hz, self.rhyme_padding_ms)?;
        for (key, &ms) in &self.durations {
            let (agent, name) = key
                .split_once('.')
                .ok_or_else(|| AgentError::InvalidCatalog(format!("duration key `{key}` is not Agent.Behavior")))?;
            let agent: Agent = agent.parse()?;
            c.set_duration(agent, name, ms)?;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub aoi: AoiConfig,
    pub thermal: ThermalParams,
    pub dm: DmConfig,
    pub agents: AgentsConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.aoi.geometry()?;
        self.agents.catalog()?;
        let bad = |m: &str| Err(ConfigError::Parse(m.to_string()));
        if self.aoi.window_samples == 0 || self.aoi.window_ms == 0 || !(self.aoi.sample_rate_hz > 0.0) {
            return bad("aoi window and sample rate must be positive");
        }
        if self.thermal.window_ms == 0 || self.thermal.hop_ms == 0 || !(self.thermal.sample_rate_hz > 0.0) {
            return bad("thermal window, hop and sample rate must be positive");
        }
        if self.dm.idle_timeout_ms == 0 || self.dm.episode_timeout_ms == 0 || self.dm.watchdog_ms == 0 {
            return bad("dm timers must be positive");
        }
        Ok(())
    }

    /// Applies `RAVE_<SECTION>_<FIELD>` overrides from `vars`.
    pub fn with_env_overrides<I>(self, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut doc = toml::Value::try_from(&self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let table = doc.as_table_mut().expect("config serializes to a table");
        let mut applied = false;
        for (var, raw) in vars {
            let Some(rest) = var.strip_prefix("RAVE_") else { continue };
            let rest = rest.to_ascii_lowercase();
            let Some((section, field)) = rest.split_once('_') else { continue };
            let Some(sec) = table.get_mut(section).and_then(|v| v.as_table_mut()) else { continue };
            let err = |reason: &str| ConfigError::Env { var: var.clone(), reason: reason.to_string() };
            let Some(current) = sec.get(field) else {
                return Err(err("no such field"));
            };
            let value = match current {
                toml::Value::Integer(_) => toml::Value::Integer(raw.trim().parse().map_err(|_| err("expected integer"))?),
                toml::Value::Float(_) => toml::Value::Float(raw.trim().parse().map_err(|_| err("expected number"))?),
                toml::Value::Boolean(_) => toml::Value::Boolean(raw.trim().parse().map_err(|_| err("expected bool"))?),
                toml::Value::String(_) => toml::Value::String(raw.clone()),
                _ => return Err(err("only scalar fields can be overridden")),
            };
            sec.insert(field.to_string(), value);
            applied = true;
        }
        if !applied {
            return Ok(self);
        }
        let cfg: Config = doc.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Hex SHA-256 of the canonical JSON of the configuration and policy text.
pub fn config_hash(config: &Config, policy_toml: &str) -> String {
    let mut h = Sha256::new();
    h.update(config.canonical_json().as_bytes());
    h.update([0u8]);
    h.update(policy_toml.as_bytes());
    hex::encode(h.finalize())
}
