//! Simulated agent executor driven by the session clock.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentCatalog, AgentCommand, AgentError, AgentLifecycleSignal, CommandAction, LifecyclePhase, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    /// Started, then Error halfway through.
    Error,
    /// Started, then nothing until reset.
    Hang,
}

/// Scheduled fault: the first dispatch of `behavior` at or after `after_ms` fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub agent: Agent,
    pub behavior: String,
    pub after_ms: u64,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutorStatus {
    Idle,
    Executing(String),
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Exec {
    Idle,
    Busy { behavior: String, terminal_at: u64, fails: bool },
    Hung { behavior: String },
    Error,
}

#[derive(Debug, Clone)]
pub struct AgentExecutor {
    agent: Agent,
    catalog: Arc<AgentCatalog>,
    state: Exec,
    faults: Vec<(Fault, bool)>,
    reset_pending: bool,
}

impl AgentExecutor {
    pub fn new(agent: Agent, catalog: Arc<AgentCatalog>, faults: &[Fault]) -> Self {
        let faults = faults.iter().filter(|f| f.agent == agent).map(|f| (f.clone(), false)).collect();
        Self { agent, catalog, state: Exec::Idle, faults, reset_pending: false }
    }

    pub fn agent(&self) -> Agent {
        self.agent
    }

    pub fn status(&self) -> ExecutorStatus {
        match &self.state {
            Exec::Idle => ExecutorStatus::Idle,
            Exec::Busy { behavior, .. } | Exec::Hung { behavior } => ExecutorStatus::Executing(behavior.clone()),
            Exec::Error => ExecutorStatus::Error,
        }
    }

    pub fn neutral_pose(&self) -> Pose {
        match self.agent {
            Agent::Robot => Pose::Sleep,
            Agent::Avatar => Pose::StandingGazeForward,
        }
    }

    fn signal(&self, behavior: Option<String>, phase: LifecyclePhase, t: u64) -> AgentLifecycleSignal {
        AgentLifecycleSignal { agent: self.agent, behavior, phase, t }
    }

    /// Starts `behavior` at `now`; the terminal signal comes from [`advance`](Self::advance).
    pub fn execute(&mut self, behavior: &str, now: u64) -> Result<AgentLifecycleSignal, AgentError> {
        match &self.state {
            Exec::Idle => {}
            Exec::Busy { behavior: b, .. } | Exec::Hung { behavior: b } => {
                return Err(AgentError::AgentBusy { agent: self.agent, executing: b.clone() });
            }
            Exec::Error => return Err(AgentError::AgentInError(self.agent)),
        }
        let duration = self.catalog.get(self.agent, behavior)?.duration_ms;
        let fault = self
            .faults
            .iter_mut()
            .find(|(f, used)| !used && f.behavior == behavior && now >= f.after_ms)
            .map(|(f, used)| {
                *used = true;
                f.kind
            });
        self.state = match fault {
            None => Exec::Busy { behavior: behavior.to_string(), terminal_at: now + duration, fails: false },
            Some(FaultKind::Error) => {
                Exec::Busy { behavior: behavior.to_string(), terminal_at: now + (duration / 2).max(1), fails: true }
            }
            Some(FaultKind::Hang) => Exec::Hung { behavior: behavior.to_string() },
        };
        Ok(self.signal(Some(behavior.to_string()), LifecyclePhase::Started, now))
    }

    /// Returns the agent to its neutral pose. A healthy primitive in progress is
    /// allowed to finish first; a hung one is terminated with an Error.
    pub fn reset_to_idle(&mut self, now: u64) -> Vec<AgentLifecycleSignal> {
        match std::mem::replace(&mut self.state, Exec::Idle) {
            Exec::Idle | Exec::Error => vec![self.reset_signal(now)],
            Exec::Hung { behavior } => vec![
                self.signal(Some(behavior), LifecyclePhase::Error { reason: "hung; reset".into() }, now),
                self.reset_signal(now),
            ],
            busy @ Exec::Busy { .. } => {
                self.state = busy;
                self.reset_pending = true;
                Vec::new()
            }
        }
    }

    fn reset_signal(&mut self, now: u64) -> AgentLifecycleSignal {
        self.reset_pending = false;
        self.signal(None, LifecyclePhase::Reset { pose: self.neutral_pose() }, now)
    }

    pub fn handle(&mut self, cmd: &AgentCommand, now: u64) -> Result<Vec<AgentLifecycleSignal>, AgentError> {
        if cmd.agent != self.agent {
            return Err(AgentError::WrongAgent { expected: self.agent, got: cmd.agent });
        }
        match &cmd.action {
            CommandAction::Execute { behavior, .. } => self.execute(behavior, now).map(|s| vec![s]),
            CommandAction::Reset => Ok(self.reset_to_idle(now)),
        }
    }

    /// Time of the next terminal signal, if one is scheduled.
    pub fn next_due(&self) -> Option<u64> {
        match &self.state {
            Exec::Busy { terminal_at, .. } => Some(*terminal_at),
            _ => None,
        }
    }

    /// Emits terminal signals due at or before `now`.
    pub fn advance(&mut self, now: u64) -> Vec<AgentLifecycleSignal> {
        let Exec::Busy { behavior, terminal_at, fails } = &self.state else {
            return Vec::new();
        };
        if *terminal_at > now {
            return Vec::new();
        }
        let (behavior, at, fails) = (behavior.clone(), *terminal_at, *fails);
        let mut out = Vec::new();
        if fails {
            self.state = Exec::Error;
            out.push(self.signal(Some(behavior), LifecyclePhase::Error { reason: "injected".into() }, at));
        } else {
            self.state = Exec::Idle;
            out.push(self.signal(Some(behavior), LifecyclePhase::Ended, at));
        }
        if self.reset_pending {
            self.state = Exec::Idle;
            out.push(self.reset_signal(at));
        }
        out
    }
}
