//! Information-state dialogue manager: state, policy, plan library and the
//! plan executor.

mod manager;
mod plans;
mod policy;
mod state;

use thiserror::Error;

use crate::agents::AgentError;

pub use manager::{DialogueManager, DmConfig, DmOutput, DmStats, SelectedPlan};
pub use plans::{
    check_template_catalog, familiarization_plan, familiarization_steps, nursery_rhyme_plan, nursery_rhyme_steps,
    template_steps, triad_greeting_steps, ActionPlan, Episode, EpisodeKind, PlanParams, PlanStep, PlanTemplate,
    StepCondition, StepTiming, SOOTHING_CHOICES,
};
pub use policy::{
    check_policy_coverage, BehaviorMatcher, CoverageReport, CoverageRow, Guard, PolicyInput, PolicyRule, PolicyTable,
    TriggerBehavior, DEFAULT_POLICY_TOML,
};
pub use state::{
    ActivePlan, AgentStatus, InformationState, Selection, StateSnapshot, StepProgress, TimerKind, TimerSignal, Trigger,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DmError {
    #[error("event at {event} ms is older than the clock ({clock} ms) beyond the reorder tolerance")]
    StaleEvent { clock: u64, event: u64 },
    #[error("no policy rule matches {0}")]
    NoMatchingRule(String),
    #[error("unknown rhyme `{0}`")]
    UnknownRhyme(String),
    #[error("unknown plan template `{0}`")]
    UnknownTemplate(String),
    #[error("template {0} produced an empty plan")]
    EmptyPlan(PlanTemplate),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("policy: {0}")]
    PolicyParse(String),
    #[error("the dialogue manager does not consume its own outputs")]
    UnexpectedInput,
    #[error(transparent)]
    Agent(#[from] AgentError),
}
