//! Simulation harness: scenarios, the scripted baby, the session loop, traces
//! and replay.

mod baby;
mod replay;
mod runner;
mod scenario;
mod trace;

use thiserror::Error;

pub use baby::{is_input_topic, scripted_baby_step, stream_rng, streams, Emission, PerceptionSource, RecordedSource, Response, ScriptedSource};
pub use replay::{describe, render_timeline, replay, Divergence, ReplayReport};
pub use runner::{
    run_session, ClockMode, EpisodeSummary, OperatorInput, RunOptions, Session, SessionOutcome, SessionSetup,
};
pub use scenario::{
    ms, Channel, Condition, FaultEntry, SHIPPED_SCENARIOS, GazeSegment, GazeTarget, ReactionRule, Scenario, ThermalSegment, TimedBehavior,
};
pub use trace::{SessionTrace, TraceHeader, TRACE_FORMAT, TRACE_VERSION};

use crate::bus::BusError;
use crate::dm::DmError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("io: {0}")]
    Io(String),
    #[error("policy does not cover {} input combination(s): {}", .0.len(), .0.join(", "))]
    PolicyIncomplete(Vec<String>),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Dm(#[from] DmError),
}
