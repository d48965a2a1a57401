//! Payloads carried on the session bus.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentCommand, AgentLifecycleSignal};
use crate::behavior::BabyBehaviorEvent;
use crate::bus::Topic;
use crate::dm::{StateSnapshot, TimerSignal};
use crate::{AoiWindowEvent, ReadinessEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "control")]
pub enum SessionControl {
    ParentJoined { joined: bool },
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body")]
pub enum Payload {
    Aoi(AoiWindowEvent),
    Readiness(ReadinessEvent),
    Behavior(BabyBehaviorEvent),
    Lifecycle(AgentLifecycleSignal),
    Command(AgentCommand),
    State(Box<StateSnapshot>),
    Timer(TimerSignal),
    Control(SessionControl),
}

impl Payload {
    /// Topic this payload is published on.
    pub fn topic(&self) -> Topic {
        use crate::agents::Agent;
        match self {
            Payload::Aoi(_) => Topic::PerceptionAoi,
            Payload::Readiness(_) => Topic::PerceptionThermal,
            Payload::Behavior(_) => Topic::PerceptionBehavior,
            Payload::Lifecycle(s) => match s.agent {
                Agent::Avatar => Topic::AvatarLifecycle,
                Agent::Robot => Topic::RobotLifecycle,
            },
            Payload::Command(c) => match c.agent {
                Agent::Avatar => Topic::AvatarCommand,
                Agent::Robot => Topic::RobotCommand,
            },
            Payload::State(_) => Topic::DmState,
            Payload::Timer(_) => Topic::DmTimer,
            Payload::Control(_) => Topic::SessionControl,
        }
    }
}

pub type Message = crate::bus::BusMessage<Payload>;
