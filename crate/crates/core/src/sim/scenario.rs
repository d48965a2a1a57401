//! Scenario files: a scripted baby as piecewise gaze/thermal segments, timed
//! behaviors, reaction rules, a fault schedule and the session condition.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::agents::{Agent, AgentCatalog, Fault, FaultKind};
use crate::behavior::BehaviorCatalog;
use crate::gaze::Aoi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    TwoWay,
    ThreeWay,
}

/// Where the simulated gaze points during a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GazeTarget {
    Robot,
    Avatar,
    InBetween,
    Outside,
    /// Tracker loses the eyes: every sample invalid.
    Lost,
}

impl GazeTarget {
    pub fn aoi(self) -> Option<Aoi> {
        match self {
            GazeTarget::Robot => Some(Aoi::Robot),
            GazeTarget::Avatar => Some(Aoi::Avatar),
            GazeTarget::InBetween => Some(Aoi::InBetween),
            GazeTarget::Outside => Some(Aoi::Outside),
            GazeTarget::Lost => None,
        }
    }
}

fn default_jitter() -> f64 {
    0.004
}

fn one() -> f64 {
    1.0
}

fn default_hold() -> u64 {
    3000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeSegment {
    pub from_s: f64,
    pub to_s: f64,
    pub target: GazeTarget,
    /// Standard deviation of the gaze point around the target anchor.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "one")]
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSegment {
    pub from_s: f64,
    pub to_s: f64,
    pub start_c: f64,
    pub end_c: f64,
    /// Standard deviation of additive Gaussian noise, °C.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "one")]
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedBehavior {
    pub at_s: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Aoi,
    Behavior,
}

/// When `agent` starts `on`, with probability `p` the baby responds on
/// `channel` after `latency_ms` (uniform 500–2000 ms when unset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionRule {
    pub on: String,
    pub agent: Agent,
    pub channel: Channel,
    pub value: String,
    pub p: f64,
    #[serde(default)]
    pub latency_ms: Option<u64>,
    /// How long an AOI response holds the gaze.
    #[serde(default = "default_hold")]
    pub hold_ms: u64,
    /// Rule is inactive before this time.
    #[serde(default)]
    pub active_from_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEntry {
    pub agent: Agent,
    pub behavior: String,
    pub after_s: f64,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub condition: Condition,
    #[serde(default)]
    pub parent_joined_at_s: Option<f64>,
    #[serde(default)]
    pub gaze: Vec<GazeSegment>,
    #[serde(default)]
    pub thermal: Vec<ThermalSegment>,
    #[serde(default)]
    pub behaviors: Vec<TimedBehavior>,
    #[serde(default)]
    pub reactions: Vec<ReactionRule>,
    #[serde(default)]
    pub faults: Vec<FaultEntry>,
}

/// Scenarios bundled with the crate, by name.
pub const SHIPPED_SCENARIOS: [(&str, &str); 6] = [
    ("cooperative", include_str!("../../data/scenarios/cooperative.toml")),
    ("fussy", include_str!("../../data/scenarios/fussy.toml")),
    ("distracted", include_str!("../../data/scenarios/distracted.toml")),
    ("robot-fixated", include_str!("../../data/scenarios/robot-fixated.toml")),
    ("social-referencing", include_str!("../../data/scenarios/social-referencing.toml")),
    ("agent-fault", include_str!("../../data/scenarios/agent-fault.toml")),
];

/// Seconds to whole milliseconds.
pub fn ms(s: f64) -> u64 {
    (s * 1000.0).round() as u64
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate(&BehaviorCatalog::default(), &AgentCatalog::default())?;
        Ok(s)
    }

    pub fn duration_ms(&self) -> u64 {
        ms(self.duration_s)
    }

    pub fn faults(&self) -> Vec<Fault> {
        self.faults
            .iter()
            .map(|f| Fault { agent: f.agent, behavior: f.behavior.clone(), after_ms: ms(f.after_s), kind: f.kind })
            .collect()
    }

    pub fn validate(&self, behaviors: &BehaviorCatalog, agents: &AgentCatalog) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(format!("{}: {m}", self.name)));
        if self.schema != 1 {
            return bad(format!("unsupported schema {}", self.schema));
        }
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive".into());
        }
        match (self.condition, self.parent_joined_at_s) {
            (Condition::ThreeWay, Some(t)) if t >= 0.0 => {}
            (Condition::TwoWay, None) => {}
            _ => return bad("condition ThreeWay iff parent_joined_at_s is set".into()),
        }
        let check_segments = |kind: &str, spans: Vec<(f64, f64)>| -> Result<(), SimError> {
            let mut last_end = 0.0;
            for (i, (from, to)) in spans.into_iter().enumerate() {
                if !(from >= 0.0 && to > from) {
                    return Err(SimError::InvalidScenario(format!("{}: {kind} segment {i} is empty", self.name)));
                }
                if from < last_end {
                    return Err(SimError::InvalidScenario(format!(
                        "{}: {kind} segment {i} is unsorted or overlaps",
                        self.name
                    )));
                }
                last_end = to;
            }
            Ok(())
        };
        check_segments("gaze", self.gaze.iter().map(|g| (g.from_s, g.to_s)).collect())?;
        check_segments("thermal", self.thermal.iter().map(|g| (g.from_s, g.to_s)).collect())?;
        let fractions = self.gaze.iter().map(|g| g.valid_fraction).chain(self.thermal.iter().map(|t| t.valid_fraction));
        if fractions.into_iter().any(|f| !(0.0..=1.0).contains(&f)) {
            return bad("valid_fraction must be in [0, 1]".into());
        }
        if self.gaze.iter().any(|g| !(g.jitter >= 0.0)) || self.thermal.iter().any(|t| !(t.noise >= 0.0)) {
            return bad("jitter and noise must be non-negative".into());
        }
        let mut prev = 0.0;
        for b in &self.behaviors {
            if b.at_s < prev {
                return bad(format!("behavior timeline unsorted at {} s", b.at_s));
            }
            prev = b.at_s;
            if behaviors.get(&b.label).is_err() {
                return bad(format!("unknown behavior label `{}`", b.label));
            }
        }
        for r in &self.reactions {
            if !(0.0..=1.0).contains(&r.p) {
                return bad(format!("reaction on {} has probability {} outside [0, 1]", r.on, r.p));
            }
            if !agents.contains(r.agent, &r.on) {
                return bad(format!("reaction on unknown {} behavior `{}`", r.agent, r.on));
            }
            if r.latency_ms == Some(0) {
                return bad("reaction latency must be at least 1 ms".into());
            }
            let ok = match r.channel {
                Channel::Aoi => matches!(r.value.as_str(), "Robot" | "Avatar" | "InBetween" | "Outside" | "Lost"),
                Channel::Behavior => behaviors.get(&r.value).is_ok(),
            };
            if !ok {
                return bad(format!("reaction value `{}` invalid for channel {:?}", r.value, r.channel));
            }
        }
        for f in &self.faults {
            if !agents.contains(f.agent, &f.behavior) {
                return bad(format!("fault on unknown {} behavior `{}`", f.agent, f.behavior));
            }
        }
        Ok(())
    }
}
