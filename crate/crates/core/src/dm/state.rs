//! Information state and the snapshot published on `dm.state`.

use serde::{Deserialize, Serialize};

use super::plans::{ActionPlan, Episode, PlanStep, PlanTemplate};
use crate::agents::Agent;
use crate::behavior::BabyBehaviorEvent;
use crate::gaze::Aoi;
use crate::thermal::Readiness;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentStatus {
    Idle,
    Executing(String),
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimerKind {
    IdleTimeout,
    EpisodeTimeout,
    BehaviorWatchdog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimerSignal {
    pub id: u64,
    pub created_at: u64,
    pub fire_at: u64,
    pub kind: TimerKind,
    /// Agent a watchdog guards.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<Agent>,
}

/// Runtime bookkeeping for one plan step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepProgress {
    pub dispatched_at: Option<u64>,
    pub ended_at: Option<u64>,
    pub skipped: bool,
    /// AOI when the step ended, for conditional successors.
    pub aoi_at_end: Option<Aoi>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivePlan {
    pub plan: ActionPlan,
    /// Index of the next step to dispatch.
    pub cursor: usize,
    pub installed_at: u64,
    pub progress: Vec<StepProgress>,
}

impl ActivePlan {
    pub fn new(plan: ActionPlan, installed_at: u64) -> Self {
        let progress = vec![StepProgress::default(); plan.steps.len()];
        Self { plan, cursor: 0, installed_at, progress }
    }

    pub fn is_finished(&self) -> bool {
        self.cursor == self.plan.steps.len() && self.progress.iter().all(|p| p.ended_at.is_some())
    }

    /// Removes the undispatched tail of the plan.
    pub fn truncate(&mut self) -> Vec<PlanStep> {
        let rest = self.plan.steps.split_off(self.cursor);
        self.progress.truncate(self.cursor);
        rest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationState {
    pub aoi: Aoi,
    pub fixated: bool,
    pub readiness: Readiness,
    pub last_behavior: Option<BabyBehaviorEvent>,
    pub avatar_status: AgentStatus,
    pub robot_status: AgentStatus,
    pub active_plan: Option<ActivePlan>,
    pub episode: Episode,
    pub parent_joined: bool,
    pub timers: Vec<TimerSignal>,
    pub clock: u64,
    /// Index into the rhyme rotation of the next rhyme.
    pub rhyme_rotation: usize,
    /// Set when the idle timeout fired and no plan has been installed since.
    pub idle: bool,
}

impl Default for InformationState {
    fn default() -> Self {
        Self {
            aoi: Aoi::Outside,
            fixated: false,
            readiness: Readiness::None,
            last_behavior: None,
            avatar_status: AgentStatus::Idle,
            robot_status: AgentStatus::Idle,
            active_plan: None,
            episode: Episode::Idle,
            parent_joined: false,
            timers: Vec::new(),
            clock: 0,
            rhyme_rotation: 0,
            idle: false,
        }
    }
}

impl InformationState {
    pub fn status(&self, agent: Agent) -> &AgentStatus {
        match agent {
            Agent::Avatar => &self.avatar_status,
            Agent::Robot => &self.robot_status,
        }
    }

    pub fn status_mut(&mut self, agent: Agent) -> &mut AgentStatus {
        match agent {
            Agent::Avatar => &mut self.avatar_status,
            Agent::Robot => &mut self.robot_status,
        }
    }
}

/// What caused a plan selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "trigger")]
pub enum Trigger {
    SessionStart,
    Behavior { label: String },
    IdleTimeout,
    PerceptualChange,
    PlanCompleted,
    AgentError { agent: Agent },
    Watchdog { agent: Agent },
    EpisodeTimeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    #[serde(flatten)]
    pub trigger: Trigger,
    pub rule: String,
    pub template: PlanTemplate,
    pub plan_id: Option<u64>,
}

/// Published after every processed event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    /// Kind of input that produced this snapshot.
    pub cause: String,
    pub state: InformationState,
    /// Steps dropped by a baby-behavior interrupt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discarded: Vec<PlanStep>,
    /// Steps dropped by error recovery or an episode timeout.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aborted: Vec<PlanStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<Selection>,
}
