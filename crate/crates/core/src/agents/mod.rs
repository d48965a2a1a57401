//! Avatar and Robot: behavior catalog, lifecycle signals, simulated executors
//! and rhyme timelines.

mod catalog;
mod executor;
mod rhyme;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{
    rhyme_duration_ms, Agent, AgentCatalog, BehaviorGroup, PrimitiveBehavior, SignUnit, Target, DEFAULT_AGENTS_TOML,
    RHYMES,
};
pub use executor::{AgentExecutor, ExecutorStatus, Fault, FaultKind};
pub use rhyme::{coefficient_of_variation, inter_onset_intervals, rhyme_timeline, TimelineUnit};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("{agent} is busy executing {executing}")]
    AgentBusy { agent: Agent, executing: String },
    #[error("{0} is in the error state and must be reset first")]
    AgentInError(Agent),
    #[error("{agent} has no behavior `{behavior}`")]
    UnknownBehavior { agent: Agent, behavior: String },
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("command for {got} delivered to {expected}")]
    WrongAgent { expected: Agent, got: Agent },
    #[error("`{0}` is not a rhyme")]
    NotARhyme(String),
    #[error("invalid agent catalog: {0}")]
    InvalidCatalog(String),
}

/// Neutral pose an agent returns to on reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pose {
    /// Head down, eyes closed.
    Sleep,
    StandingGazeForward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase")]
pub enum LifecyclePhase {
    Started,
    Ended,
    Error { reason: String },
    Reset { pose: Pose },
}

impl LifecyclePhase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, LifecyclePhase::Ended | LifecyclePhase::Error { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLifecycleSignal {
    pub agent: Agent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<String>,
    #[serde(flatten)]
    pub phase: LifecyclePhase,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum CommandAction {
    Execute {
        behavior: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Target>,
        plan_id: u64,
        step: usize,
    },
    Reset,
}

/// Command published by the dialogue manager on `dm.command.<agent>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCommand {
    pub agent: Agent,
    #[serde(flatten)]
    pub action: CommandAction,
    pub t: u64,
}

impl AgentCommand {
    pub fn behavior(&self) -> Option<&str> {
        match &self.action {
            CommandAction::Execute { behavior, .. } => Some(behavior),
            CommandAction::Reset => None,
        }
    }
}
