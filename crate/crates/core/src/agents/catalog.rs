//! Primitive-behavior catalog for both agents, loaded from TOML.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AgentError;

pub const DEFAULT_AGENTS_TOML: &str = include_str!("../../data/agents.toml");

/// The four rhymes, in rotation order.
pub const RHYMES: [&str; 4] = ["Boat", "Pig", "Fish", "Cat"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Agent {
    Avatar,
    Robot,
}

impl Agent {
    pub const BOTH: [Agent; 2] = [Agent::Avatar, Agent::Robot];

    pub fn lower(self) -> &'static str {
        match self {
            Agent::Avatar => "avatar",
            Agent::Robot => "robot",
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Agent {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Avatar" | "avatar" => Ok(Agent::Avatar),
            "Robot" | "robot" => Ok(Agent::Robot),
            other => Err(AgentError::UnknownAgent(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BehaviorGroup {
    ConversationalFiller,
    SocialBehavior,
    QuestionSolicitation,
    LinguisticPattern,
    FillerAndSocial,
}

impl BehaviorGroup {
    pub fn allowed_for(self, agent: Agent) -> bool {
        match agent {
            Agent::Robot => self == BehaviorGroup::FillerAndSocial,
            Agent::Avatar => self != BehaviorGroup::FillerAndSocial,
        }
    }
}

/// Addressee of a behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Baby,
    Robot,
    Avatar,
    Both,
}

/// One sign unit of a rhyme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignUnit {
    pub gloss: String,
    pub prime: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveBehavior {
    pub agent: Agent,
    pub name: String,
    pub group: BehaviorGroup,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sign_units: Vec<SignUnit>,
}

impl PrimitiveBehavior {
    pub fn is_rhyme(&self) -> bool {
        !self.sign_units.is_empty()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    name: String,
    group: BehaviorGroup,
    duration_ms: Option<u64>,
    #[serde(default)]
    sign_units: Vec<SignUnit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    schema: u32,
    nucleus_hz: f64,
    rhyme_padding_ms: f64,
    avatar: Vec<RawEntry>,
    robot: Vec<RawEntry>,
}

fn required_names(agent: Agent) -> &'static [&'static str] {
    match agent {
        Agent::Avatar => &[
            "Nod", "GazeForward", "GazeRight", "GazeLeft", "HeadShake", "Contemplate", "Think", "Toss", "Wave",
            "Hello", "Peekaboo", "GoAwayComeBack", "What", "WhatsWrong", "WhatsThat", "Ready", "GoodMorning",
            "LookAtMe", "Boat", "Pig", "Fish", "Cat",
        ],
        Agent::Robot => &[
            "Nod", "Hide", "Unhide", "GazeForward", "GazeRight", "GazeLeft", "Startle", "Blink", "Sleep", "WakeUp",
        ],
    }
}

/// Behaviors per agent plus rhyme timing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCatalog {
    pub nucleus_hz: f64,
    pub rhyme_padding_ms: f64,
    behaviors: BTreeMap<(Agent, String), PrimitiveBehavior>,
}

impl AgentCatalog {
    pub fn from_toml(text: &str) -> Result<Self, AgentError> {
        let raw: RawCatalog = toml::from_str(text).map_err(|e| AgentError::InvalidCatalog(e.to_string()))?;
        if raw.schema != 1 {
            return Err(AgentError::InvalidCatalog(format!("unsupported schema {}", raw.schema)));
        }
        if !(raw.nucleus_hz > 0.0) || !(raw.rhyme_padding_ms >= 0.0) {
            return Err(AgentError::InvalidCatalog("nucleus_hz must be > 0 and padding >= 0".into()));
        }
        let mut cat = Self { nucleus_hz: raw.nucleus_hz, rhyme_padding_ms: raw.rhyme_padding_ms, behaviors: BTreeMap::new() };
        for (agent, entries) in [(Agent::Avatar, raw.avatar), (Agent::Robot, raw.robot)] {
            for e in entries {
                if !e.group.allowed_for(agent) {
                    return Err(AgentError::InvalidCatalog(format!("{agent} {} has group {:?}", e.name, e.group)));
                }
                let duration_ms = if e.sign_units.is_empty() {
                    e.duration_ms.ok_or_else(|| {
                        AgentError::InvalidCatalog(format!("{agent} {} needs duration_ms", e.name))
                    })?
                } else {
                    rhyme_duration_ms(e.sign_units.len(), raw.nucleus_hz, raw.rhyme_padding_ms)
                };
                if duration_ms == 0 {
                    return Err(AgentError::InvalidCatalog(format!("{agent} {} has zero duration", e.name)));
                }
                let b = PrimitiveBehavior { agent, name: e.name.clone(), group: e.group, duration_ms, sign_units: e.sign_units };
                if cat.behaviors.insert((agent, e.name.clone()), b).is_some() {
                    return Err(AgentError::InvalidCatalog(format!("duplicate {agent} behavior {}", e.name)));
                }
            }
            for name in required_names(agent) {
                if !cat.behaviors.contains_key(&(agent, name.to_string())) {
                    return Err(AgentError::InvalidCatalog(format!("{agent} behavior {name} missing")));
                }
            }
        }
        for rhyme in RHYMES {
            if !cat.get(Agent::Avatar, rhyme)?.is_rhyme() {
                return Err(AgentError::InvalidCatalog(format!("rhyme {rhyme} has no sign units")));
            }
        }
        Ok(cat)
    }

    pub fn get(&self, agent: Agent, name: &str) -> Result<&PrimitiveBehavior, AgentError> {
        self.behaviors
            .get(&(agent, name.to_string()))
            .ok_or_else(|| AgentError::UnknownBehavior { agent, behavior: name.to_string() })
    }

    pub fn contains(&self, agent: Agent, name: &str) -> bool {
        self.behaviors.contains_key(&(agent, name.to_string()))
    }

    pub fn behaviors(&self, agent: Agent) -> impl Iterator<Item = &PrimitiveBehavior> {
        self.behaviors.values().filter(move |b| b.agent == agent)
    }

    /// Overrides the duration of one non-rhyme behavior.
    pub fn set_duration(&mut self, agent: Agent, name: &str, duration_ms: u64) -> Result<(), AgentError> {
        let b = self
            .behaviors
            .get_mut(&(agent, name.to_string()))
            .ok_or_else(|| AgentError::UnknownBehavior { agent, behavior: name.to_string() })?;
        if duration_ms == 0 || b.is_rhyme() {
            return Err(AgentError::InvalidCatalog(format!("cannot set duration of {agent} {name} to {duration_ms}")));
        }
        b.duration_ms = duration_ms;
        Ok(())
    }

    /// Changes rhyme timing and recomputes rhyme durations.
    pub fn set_rhyme_timing(&mut self, nucleus_hz: f64, padding_ms: f64) -> Result<(), AgentError> {
        if !(nucleus_hz > 0.0) || !(padding_ms >= 0.0) {
            return Err(AgentError::InvalidCatalog("nucleus_hz must be > 0 and padding >= 0".into()));
        }
        self.nucleus_hz = nucleus_hz;
        self.rhyme_padding_ms = padding_ms;
        for b in self.behaviors.values_mut().filter(|b| b.is_rhyme()) {
            b.duration_ms = rhyme_duration_ms(b.sign_units.len(), nucleus_hz, padding_ms);
        }
        Ok(())
    }
}

impl Default for AgentCatalog {
    fn default() -> Self {
        Self::from_toml(DEFAULT_AGENTS_TOML).expect("shipped agent catalog is valid")
    }
}

/// Whole-millisecond duration of a rhyme with `units` sign units.
pub fn rhyme_duration_ms(units: usize, nucleus_hz: f64, padding_ms: f64) -> u64 {
    let nucleus = 1000.0 / nucleus_hz;
    let total = units as f64 * nucleus + units.saturating_sub(1) as f64 * padding_ms;
    total.round() as u64
}
