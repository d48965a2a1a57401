//! Plan templates and their instantiation into timed action plans.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DmError;
use crate::agents::{Agent, AgentCatalog, SignUnit, Target, RHYMES};

/// Episode the dialogue is in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Episode {
    Familiarization,
    NurseryRhyme(String),
    Soothing,
    AttentionGetting,
    Idle,
}

impl Episode {
    pub fn kind(&self) -> EpisodeKind {
        match self {
            Episode::Familiarization => EpisodeKind::Familiarization,
            Episode::NurseryRhyme(_) => EpisodeKind::NurseryRhyme,
            Episode::Soothing => EpisodeKind::Soothing,
            Episode::AttentionGetting => EpisodeKind::AttentionGetting,
            Episode::Idle => EpisodeKind::Idle,
        }
    }
}

impl fmt::Display for Episode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Episode::NurseryRhyme(r) => write!(f, "NurseryRhyme({r})"),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

/// Episode without the rhyme id, as used in policy guards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EpisodeKind {
    Familiarization,
    NurseryRhyme,
    Soothing,
    AttentionGetting,
    Idle,
}

impl EpisodeKind {
    pub const ALL: [EpisodeKind; 5] = [
        EpisodeKind::Familiarization,
        EpisodeKind::NurseryRhyme,
        EpisodeKind::Soothing,
        EpisodeKind::AttentionGetting,
        EpisodeKind::Idle,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlanTemplate {
    Familiarization,
    NurseryRhyme,
    AttentionThenRhyme,
    AttentionGetting,
    RobotHandoff,
    SocialReferencing,
    Soothing,
    RobotSoothing,
    SocialRoutine,
    QuestionSolicitation,
    AvatarResponding,
    /// Select no plan and wait for the next trigger.
    Wait,
}

impl PlanTemplate {
    pub const ALL: [PlanTemplate; 12] = [
        PlanTemplate::Familiarization,
        PlanTemplate::NurseryRhyme,
        PlanTemplate::AttentionThenRhyme,
        PlanTemplate::AttentionGetting,
        PlanTemplate::RobotHandoff,
        PlanTemplate::SocialReferencing,
        PlanTemplate::Soothing,
        PlanTemplate::RobotSoothing,
        PlanTemplate::SocialRoutine,
        PlanTemplate::QuestionSolicitation,
        PlanTemplate::AvatarResponding,
        PlanTemplate::Wait,
    ];

    /// Episode a plan of this template puts the dialogue in. `None` for `Wait`.
    pub fn episode(self, rhyme: &str) -> Option<Episode> {
        use PlanTemplate::*;
        Some(match self {
            Familiarization => Episode::Familiarization,
            NurseryRhyme | AttentionThenRhyme => Episode::NurseryRhyme(rhyme.to_string()),
            AttentionGetting | RobotHandoff | SocialReferencing => Episode::AttentionGetting,
            Soothing | RobotSoothing | SocialRoutine | QuestionSolicitation | AvatarResponding => Episode::Soothing,
            Wait => return None,
        })
    }

    pub fn uses_rhyme(self) -> bool {
        matches!(self, PlanTemplate::NurseryRhyme | PlanTemplate::AttentionThenRhyme)
    }
}

impl fmt::Display for PlanTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for PlanTemplate {
    type Err = DmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlanTemplate::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| DmError::UnknownTemplate(s.to_string()))
    }
}

/// When a step becomes eligible, relative to the step before it. The first
/// step of a plan is measured from plan installation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "after")]
pub enum StepTiming {
    /// `delay_ms` after the previous step ended.
    Previous { delay_ms: u64 },
    /// `delay_ms` after the previous step was dispatched.
    WithPrevious { delay_ms: u64 },
}

impl StepTiming {
    pub const NEXT: StepTiming = StepTiming::Previous { delay_ms: 0 };
    pub const TOGETHER: StepTiming = StepTiming::WithPrevious { delay_ms: 0 };

    pub fn delay_ms(self) -> u64 {
        match self {
            StepTiming::Previous { delay_ms } | StepTiming::WithPrevious { delay_ms } => delay_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepCondition {
    /// Skip the step if the AOI changed since the previous step ended.
    AoiUnchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub agent: Agent,
    pub behavior: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    pub timing: StepTiming,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<StepCondition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sign_units: Vec<SignUnit>,
}

impl PlanStep {
    pub fn new(agent: Agent, behavior: &str, target: Option<Target>, timing: StepTiming) -> Self {
        Self { agent, behavior: behavior.to_string(), target, timing, condition: None, sign_units: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub id: u64,
    pub episode: Episode,
    pub template: PlanTemplate,
    /// Identifier of the policy rule (or scripted episode) that produced the plan.
    pub provenance: String,
    pub steps: Vec<PlanStep>,
}

impl ActionPlan {
    /// Start offsets of each step assuming every step is dispatched as soon as
    /// it is eligible and agents are free.
    pub fn nominal_offsets(&self, catalog: &AgentCatalog) -> Result<Vec<u64>, DmError> {
        let mut offsets = Vec::with_capacity(self.steps.len());
        let mut busy_until = [0u64; 2];
        let mut prev: Option<(u64, u64)> = None;
        for step in &self.steps {
            let duration = catalog.get(step.agent, &step.behavior)?.duration_ms;
            let eligible = match (prev, step.timing) {
                (None, t) => t.delay_ms(),
                (Some((_, end)), StepTiming::Previous { delay_ms }) => end + delay_ms,
                (Some((start, _)), StepTiming::WithPrevious { delay_ms }) => start + delay_ms,
            };
            let slot = step.agent as usize;
            let start = eligible.max(busy_until[slot]);
            busy_until[slot] = start + duration;
            offsets.push(start);
            prev = Some((start, start + duration));
        }
        Ok(offsets)
    }

    /// Checks that the plan is non-empty and every behavior resolves.
    pub fn validate(&self, catalog: &AgentCatalog) -> Result<(), DmError> {
        if self.steps.is_empty() {
            return Err(DmError::EmptyPlan(self.template));
        }
        for s in &self.steps {
            catalog.get(s.agent, &s.behavior)?;
        }
        Ok(())
    }
}

/// Behaviors the soothing plan draws from.
pub const SOOTHING_CHOICES: [&str; 3] = ["What", "WhatsWrong", "Peekaboo"];

/// Free parameters of template instantiation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanParams {
    pub rhyme: String,
    pub soothing_choice: usize,
    pub social_ref_wait_ms: u64,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self { rhyme: RHYMES[0].to_string(), soothing_choice: 0, social_ref_wait_ms: 2000 }
    }
}

use Agent::{Avatar, Robot};
use StepTiming::{Previous, WithPrevious};

fn step(agent: Agent, behavior: &str, target: Option<Target>, timing: StepTiming) -> PlanStep {
    PlanStep::new(agent, behavior, target, timing)
}

/// The fixed opening sequence introducing both agents.
pub fn familiarization_steps() -> Vec<PlanStep> {
    let n = StepTiming::NEXT;
    vec![
        step(Robot, "WakeUp", None, n),
        step(Robot, "Nod", Some(Target::Baby), n),
        step(Robot, "GazeLeft", Some(Target::Avatar), n),
        step(Avatar, "GazeRight", Some(Target::Robot), n),
        step(Avatar, "Nod", Some(Target::Robot), n),
        step(Avatar, "GazeForward", Some(Target::Baby), n),
        step(Avatar, "Wave", Some(Target::Baby), n),
        step(Avatar, "GoodMorning", Some(Target::Both), n),
        step(Robot, "GazeForward", Some(Target::Baby), n),
    ]
}

/// Triad greeting between the agents, ending with both facing the baby.
pub fn triad_greeting_steps() -> Vec<PlanStep> {
    let (n, t) = (StepTiming::NEXT, StepTiming::TOGETHER);
    vec![
        step(Avatar, "GazeRight", Some(Target::Robot), n),
        step(Robot, "GazeLeft", Some(Target::Avatar), n),
        step(Avatar, "Nod", Some(Target::Robot), n),
        step(Robot, "Nod", Some(Target::Avatar), t),
        step(Avatar, "LookAtMe", Some(Target::Both), n),
        step(Avatar, "Ready", Some(Target::Both), n),
        step(Avatar, "GazeForward", Some(Target::Baby), n),
        step(Robot, "GazeForward", Some(Target::Baby), t),
    ]
}

/// Triad greeting, the rhyme, the Robot turning to the Avatar and nodding in
/// the middle of the rhyme, and a closing filler.
pub fn nursery_rhyme_steps(catalog: &AgentCatalog, rhyme: &str) -> Result<Vec<PlanStep>, DmError> {
    if !RHYMES.contains(&rhyme) {
        return Err(DmError::UnknownRhyme(rhyme.to_string()));
    }
    let behavior = catalog.get(Avatar, rhyme)?;
    let gaze = catalog.get(Robot, "GazeLeft")?.duration_ms;
    let turn_at = (behavior.duration_ms / 2).saturating_sub(gaze);
    let mut steps = triad_greeting_steps();
    let mut rhyme_step = step(Avatar, rhyme, Some(Target::Baby), StepTiming::NEXT);
    rhyme_step.sign_units = behavior.sign_units.clone();
    steps.push(rhyme_step);
    steps.push(step(Robot, "GazeLeft", Some(Target::Avatar), WithPrevious { delay_ms: turn_at }));
    steps.push(step(Robot, "Nod", Some(Target::Avatar), StepTiming::NEXT));
    steps.push(step(Avatar, "Nod", Some(Target::Baby), StepTiming::NEXT));
    Ok(steps)
}

/// Steps of a template, or `None` for `Wait`.
pub fn template_steps(
    template: PlanTemplate,
    catalog: &AgentCatalog,
    params: &PlanParams,
) -> Result<Option<Vec<PlanStep>>, DmError> {
    use PlanTemplate as P;
    let (n, t) = (StepTiming::NEXT, StepTiming::TOGETHER);
    let baby = Some(Target::Baby);
    let steps = match template {
        P::Familiarization => familiarization_steps(),
        P::NurseryRhyme => nursery_rhyme_steps(catalog, &params.rhyme)?,
        P::AttentionThenRhyme => {
            let mut steps = vec![step(Avatar, "LookAtMe", baby, n)];
            steps.extend(nursery_rhyme_steps(catalog, &params.rhyme)?);
            steps
        }
        P::AttentionGetting => vec![
            step(Robot, "GazeLeft", Some(Target::Avatar), n),
            step(Avatar, "Wave", baby, t),
            step(Avatar, "LookAtMe", baby, n),
        ],
        P::RobotHandoff => vec![
            step(Robot, "Nod", baby, n),
            step(Robot, "GazeLeft", Some(Target::Avatar), n),
            step(Avatar, "LookAtMe", baby, n),
        ],
        P::SocialReferencing => {
            let mut wave = step(Avatar, "Wave", baby, Previous { delay_ms: params.social_ref_wait_ms });
            wave.condition = Some(StepCondition::AoiUnchanged);
            vec![step(Avatar, "LookAtMe", baby, n), wave]
        }
        P::Soothing => {
            let choice = SOOTHING_CHOICES
                .get(params.soothing_choice)
                .ok_or_else(|| DmError::InvalidPlan(format!("soothing choice {}", params.soothing_choice)))?;
            vec![step(Avatar, choice, baby, n), step(Robot, "GazeLeft", Some(Target::Avatar), t)]
        }
        P::RobotSoothing => vec![
            step(Robot, "GazeForward", baby, n),
            step(Robot, "Nod", baby, n),
            step(Robot, "GazeLeft", Some(Target::Avatar), n),
            step(Avatar, "Wave", baby, t),
        ],
        P::SocialRoutine => vec![step(Avatar, "Hello", baby, n), step(Avatar, "WhatsThat", baby, n)],
        P::QuestionSolicitation => vec![
            step(Avatar, "What", baby, n),
            step(Robot, "GazeLeft", Some(Target::Avatar), t),
            step(Robot, "Nod", Some(Target::Avatar), n),
        ],
        P::AvatarResponding => vec![
            step(Avatar, "WhatsWrong", baby, n),
            step(Robot, "GazeLeft", Some(Target::Avatar), t),
            step(Robot, "Nod", Some(Target::Avatar), n),
            step(Avatar, "Think", baby, n),
        ],
        P::Wait => return Ok(None),
    };
    Ok(Some(steps))
}

/// Every behavior reachable from any template under any free parameter.
pub fn check_template_catalog(catalog: &AgentCatalog) -> Result<(), DmError> {
    for template in PlanTemplate::ALL {
        for rhyme in RHYMES {
            for soothing_choice in 0..SOOTHING_CHOICES.len() {
                let params = PlanParams { rhyme: rhyme.to_string(), soothing_choice, social_ref_wait_ms: 0 };
                if let Some(steps) = template_steps(template, catalog, &params)? {
                    if steps.is_empty() {
                        return Err(DmError::EmptyPlan(template));
                    }
                    for s in &steps {
                        catalog.get(s.agent, &s.behavior)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// The familiarization plan as an installed plan.
pub fn familiarization_plan(id: u64) -> ActionPlan {
    ActionPlan {
        id,
        episode: Episode::Familiarization,
        template: PlanTemplate::Familiarization,
        provenance: "Familiarization".into(),
        steps: familiarization_steps(),
    }
}

/// A standalone Nursery Rhyme episode plan for `rhyme`.
pub fn nursery_rhyme_plan(id: u64, catalog: &AgentCatalog, rhyme: &str) -> Result<ActionPlan, DmError> {
    Ok(ActionPlan {
        id,
        episode: Episode::NurseryRhyme(rhyme.to_string()),
        template: PlanTemplate::NurseryRhyme,
        provenance: "NurseryRhyme".into(),
        steps: nursery_rhyme_steps(catalog, rhyme)?,
    })
}
