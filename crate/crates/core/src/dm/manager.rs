//! The dialogue manager: a single sequential consumer of perception, lifecycle
//! and control events that selects and executes action plans.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plans::{template_steps, ActionPlan, EpisodeKind, PlanParams, PlanTemplate, StepCondition, StepTiming, SOOTHING_CHOICES};
use super::policy::{PolicyInput, PolicyTable, TriggerBehavior};
use super::state::{ActivePlan, AgentStatus, InformationState, Selection, StateSnapshot, TimerKind, TimerSignal, Trigger};
use super::{familiarization_plan, DmError, Episode};
use crate::agents::{Agent, AgentCatalog, AgentCommand, AgentLifecycleSignal, CommandAction, LifecyclePhase, RHYMES};
use crate::behavior::{BabyBehaviorEvent, PolicyClass};
use crate::events::{Payload, SessionControl};
use crate::thermal::Readiness;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmConfig {
    pub idle_timeout_ms: u64,
    pub episode_timeout_ms: u64,
    pub watchdog_ms: u64,
    /// Events older than the clock by at most this much are processed at the clock.
    pub reorder_tolerance_ms: u64,
    pub social_ref_wait_ms: u64,
    /// Under VeryPositive readiness pick the longer of the next two rhymes.
    pub very_positive_prefers_longer: bool,
}

impl Default for DmConfig {
    fn default() -> Self {
        Self {
            idle_timeout_ms: 8000,
            episode_timeout_ms: 30_000,
            watchdog_ms: 15_000,
            reorder_tolerance_ms: 100,
            social_ref_wait_ms: 2000,
            very_positive_prefers_longer: true,
        }
    }
}

/// Per-session counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmStats {
    pub episodes: BTreeMap<EpisodeKind, u32>,
    pub interrupts: u32,
    pub discarded_steps: u32,
    pub aborted_steps: u32,
    pub recoveries: u32,
    pub commands: u32,
    pub stale_events: u32,
}

/// Something the manager wants published.
#[derive(Debug, Clone, PartialEq)]
pub enum DmOutput {
    Command(AgentCommand),
    State(Box<StateSnapshot>),
    Timer(TimerSignal),
}

impl DmOutput {
    pub fn into_payload(self) -> Payload {
        match self {
            DmOutput::Command(c) => Payload::Command(c),
            DmOutput::State(s) => Payload::State(s),
            DmOutput::Timer(t) => Payload::Timer(t),
        }
    }
}

/// A policy decision before installation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedPlan {
    pub rule: String,
    pub template: PlanTemplate,
    pub plan: Option<ActionPlan>,
}

#[derive(Debug, Default)]
struct Pending {
    discarded: Vec<super::PlanStep>,
    aborted: Vec<super::PlanStep>,
    selections: Vec<Selection>,
    outputs: Vec<DmOutput>,
    dirty: bool,
}

pub struct DialogueManager {
    config: DmConfig,
    policy: Arc<PolicyTable>,
    catalog: Arc<AgentCatalog>,
    state: InformationState,
    rng: ChaCha8Rng,
    next_plan_id: u64,
    next_timer_id: u64,
    /// Dispatched step each agent is executing: (plan id, step index).
    in_flight: [Option<(u64, usize)>; 2],
    /// Reset owed to an agent once its current primitive ends.
    reset_deferred: [bool; 2],
    /// Reset sent, confirmation not yet received.
    reset_awaited: [bool; 2],
    stopped: bool,
    stats: DmStats,
    pending: Pending,
}

fn slot(agent: Agent) -> usize {
    agent as usize
}

impl DialogueManager {
    pub fn new(config: DmConfig, policy: Arc<PolicyTable>, catalog: Arc<AgentCatalog>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self {
            config,
            policy,
            catalog,
            state: InformationState::default(),
            rng,
            next_plan_id: 1,
            next_timer_id: 1,
            in_flight: [None, None],
            reset_deferred: [false; 2],
            reset_awaited: [false; 2],
            stopped: false,
            stats: DmStats::default(),
            pending: Pending::default(),
        }
    }

    pub fn state(&self) -> &InformationState {
        &self.state
    }

    pub fn stats(&self) -> &DmStats {
        &self.stats
    }

    pub fn config(&self) -> &DmConfig {
        &self.config
    }

    /// Installs the familiarization plan at `t` and dispatches its first step.
    pub fn start(&mut self, t: u64) -> Vec<DmOutput> {
        self.state.clock = t;
        let plan = familiarization_plan(self.take_plan_id());
        self.pending.selections.push(Selection {
            trigger: Trigger::SessionStart,
            rule: plan.provenance.clone(),
            template: PlanTemplate::Familiarization,
            plan_id: Some(plan.id),
        });
        self.install(plan);
        self.step_executor();
        self.flush("start")
    }

    /// Earliest future time at which the manager acts without new input.
    pub fn next_wakeup(&self) -> Option<u64> {
        let timer = self.state.timers.iter().map(|t| t.fire_at).min();
        let step = self.next_step_time().filter(|&e| e > self.state.clock);
        match (timer, step) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Fires timers and dispatches time-gated steps up to `t`.
    pub fn advance_to(&mut self, t: u64) -> Vec<DmOutput> {
        let mut out = Vec::new();
        while let Some(next) = self.next_wakeup().filter(|&w| w <= t) {
            self.state.clock = next;
            let due: Vec<TimerSignal> = self.state.timers.iter().filter(|x| x.fire_at == next).cloned().collect();
            for timer in due {
                self.state.timers.retain(|x| x.id != timer.id);
                self.pending.outputs.push(DmOutput::Timer(timer.clone()));
                self.on_timer(&timer);
                self.step_executor();
                out.extend(self.flush("timer"));
            }
            self.step_executor();
            if self.pending.dirty {
                out.extend(self.flush("step"));
            }
        }
        self.state.clock = self.state.clock.max(t);
        out
    }

    /// Processes one input event stamped `t`.
    pub fn handle(&mut self, payload: &Payload, t: u64) -> Result<Vec<DmOutput>, DmError> {
        if t + self.config.reorder_tolerance_ms < self.state.clock {
            self.stats.stale_events += 1;
            return Err(DmError::StaleEvent { clock: self.state.clock, event: t });
        }
        let mut out = self.advance_to(t);
        let cause = self.update_state(payload)?;
        self.step_executor();
        out.extend(self.flush(cause));
        Ok(out)
    }

    fn flush(&mut self, cause: &str) -> Vec<DmOutput> {
        let p = std::mem::take(&mut self.pending);
        let mut out = p.outputs;
        out.push(DmOutput::State(Box::new(StateSnapshot {
            cause: cause.to_string(),
            state: self.state.clone(),
            discarded: p.discarded,
            aborted: p.aborted,
            selections: p.selections,
        })));
        out
    }

    /// Applies an event to the information state and runs the reactions it triggers.
    pub fn update_state(&mut self, payload: &Payload) -> Result<&'static str, DmError> {
        match payload {
            Payload::Aoi(ev) => {
                let changed = ev.label != self.state.aoi;
                self.state.aoi = ev.label;
                self.state.fixated = ev.fixated;
                if changed && ev.label.is_agent() {
                    self.reset_idle_timer();
                }
                if changed && self.can_reselect() {
                    self.reselect(Trigger::PerceptualChange, None, self.state.episode.kind())?;
                }
                Ok("aoi")
            }
            Payload::Readiness(ev) => {
                let changed = ev.state != self.state.readiness;
                self.state.readiness = ev.state;
                if changed && self.can_reselect() {
                    self.reselect(Trigger::PerceptualChange, None, self.state.episode.kind())?;
                }
                Ok("readiness")
            }
            Payload::Behavior(ev) => {
                self.state.last_behavior = Some(ev.clone());
                if ev.policy_class == PolicyClass::Engaged {
                    self.reset_idle_timer();
                }
                if !self.stopped {
                    self.handle_behavior_interrupt(ev)?;
                }
                Ok("behavior")
            }
            Payload::Lifecycle(sig) => {
                self.on_lifecycle(sig)?;
                Ok("lifecycle")
            }
            Payload::Control(ctl) => {
                match ctl {
                    SessionControl::ParentJoined { joined } => self.state.parent_joined = *joined,
                    SessionControl::Start => {}
                    SessionControl::Stop => {
                        self.stopped = true;
                        self.state.timers.clear();
                    }
                }
                Ok("control")
            }
            Payload::Command(_) | Payload::State(_) | Payload::Timer(_) => Err(DmError::UnexpectedInput),
        }
    }

    fn can_reselect(&self) -> bool {
        !self.stopped && self.state.active_plan.is_none()
    }

    /// Drops the undispatched rest of the active plan and replans from the
    /// updated state. A primitive already running keeps running.
    pub fn handle_behavior_interrupt(&mut self, ev: &BabyBehaviorEvent) -> Result<(), DmError> {
        self.stats.interrupts += 1;
        let episode = self.state.episode.kind();
        if let Some(active) = self.state.active_plan.as_mut() {
            let dropped = active.truncate();
            self.stats.discarded_steps += dropped.len() as u32;
            self.pending.discarded.extend(dropped);
            self.state.active_plan = None;
        }
        self.clear_timers(TimerKind::EpisodeTimeout);
        let trigger = TriggerBehavior { label: ev.label.clone(), class: ev.policy_class };
        self.reselect(Trigger::Behavior { label: ev.label.clone() }, Some(trigger), episode)
    }

    /// Chooses a plan for the current state without installing it.
    pub fn select_plan(
        &mut self,
        behavior: Option<TriggerBehavior>,
        episode: EpisodeKind,
        idle_timeout: bool,
    ) -> Result<SelectedPlan, DmError> {
        let input = PolicyInput {
            aoi: self.state.aoi,
            readiness: self.state.readiness.class(),
            behavior,
            episode,
            fixated: self.state.fixated,
            idle_timeout,
        };
        let rule = self.policy.select(&input)?.clone();
        let mut params = PlanParams { social_ref_wait_ms: self.config.social_ref_wait_ms, ..PlanParams::default() };
        if rule.plan.uses_rhyme() {
            params.rhyme = self.choose_rhyme().to_string();
        }
        if rule.plan == PlanTemplate::Soothing {
            params.soothing_choice = self.rng.gen_range(0..SOOTHING_CHOICES.len());
        }
        let plan = match template_steps(rule.plan, &self.catalog, &params)? {
            None => None,
            Some(steps) => Some(ActionPlan {
                id: self.take_plan_id(),
                episode: rule.plan.episode(&params.rhyme).expect("non-wait template has an episode"),
                template: rule.plan,
                provenance: rule.id.clone(),
                steps,
            }),
        };
        Ok(SelectedPlan { rule: rule.id, template: rule.plan, plan })
    }

    fn choose_rhyme(&mut self) -> &'static str {
        let n = RHYMES.len();
        let mut idx = self.state.rhyme_rotation % n;
        if self.config.very_positive_prefers_longer && self.state.readiness == Readiness::VeryPositive {
            let next = (idx + 1) % n;
            let units = |i: usize| self.catalog.get(Agent::Avatar, RHYMES[i]).map(|b| b.sign_units.len()).unwrap_or(0);
            if units(next) > units(idx) {
                idx = next;
            }
        }
        self.state.rhyme_rotation = (idx + 1) % n;
        RHYMES[idx]
    }

    fn reselect(&mut self, trigger: Trigger, behavior: Option<TriggerBehavior>, episode: EpisodeKind) -> Result<(), DmError> {
        let idle_timeout = trigger == Trigger::IdleTimeout;
        let selected = self.select_plan(behavior, episode, idle_timeout)?;
        self.pending.selections.push(Selection {
            trigger,
            rule: selected.rule,
            template: selected.template,
            plan_id: selected.plan.as_ref().map(|p| p.id),
        });
        match selected.plan {
            Some(plan) => self.install(plan),
            None => {
                self.state.episode = Episode::Idle;
                self.arm_idle_timer_if_unarmed();
            }
        }
        self.pending.dirty = true;
        Ok(())
    }

    fn install(&mut self, plan: ActionPlan) {
        *self.stats.episodes.entry(plan.episode.kind()).or_default() += 1;
        self.state.episode = plan.episode.clone();
        self.state.idle = false;
        self.clear_timers(TimerKind::IdleTimeout);
        self.clear_timers(TimerKind::EpisodeTimeout);
        self.arm(TimerKind::EpisodeTimeout, self.config.episode_timeout_ms, None);
        self.state.active_plan = Some(ActivePlan::new(plan, self.state.clock));
        self.pending.dirty = true;
    }

    fn take_plan_id(&mut self) -> u64 {
        let id = self.next_plan_id;
        self.next_plan_id += 1;
        id
    }

    fn arm(&mut self, kind: TimerKind, after_ms: u64, agent: Option<Agent>) {
        let now = self.state.clock;
        let id = self.next_timer_id;
        self.next_timer_id += 1;
        self.state.timers.push(TimerSignal { id, created_at: now, fire_at: now + after_ms.max(1), kind, agent });
    }

    fn clear_timers(&mut self, kind: TimerKind) {
        self.state.timers.retain(|t| t.kind != kind);
    }

    fn clear_watchdog(&mut self, agent: Agent) {
        self.state.timers.retain(|t| !(t.kind == TimerKind::BehaviorWatchdog && t.agent == Some(agent)));
    }

    fn arm_idle_timer_if_unarmed(&mut self) {
        if !self.state.timers.iter().any(|t| t.kind == TimerKind::IdleTimeout) {
            self.arm(TimerKind::IdleTimeout, self.config.idle_timeout_ms, None);
        }
    }

    fn reset_idle_timer(&mut self) {
        if self.state.timers.iter().any(|t| t.kind == TimerKind::IdleTimeout) {
            self.clear_timers(TimerKind::IdleTimeout);
            self.arm(TimerKind::IdleTimeout, self.config.idle_timeout_ms, None);
        }
    }

    fn on_timer(&mut self, timer: &TimerSignal) {
        if self.stopped {
            return;
        }
        let result = match timer.kind {
            TimerKind::IdleTimeout => {
                self.state.idle = true;
                if self.state.active_plan.is_none() {
                    self.reselect(Trigger::IdleTimeout, None, self.state.episode.kind())
                } else {
                    Ok(())
                }
            }
            TimerKind::EpisodeTimeout => {
                let episode = self.state.episode.kind();
                self.abort_plan();
                self.reselect(Trigger::EpisodeTimeout, None, episode)
            }
            TimerKind::BehaviorWatchdog => {
                let agent = timer.agent.expect("watchdog has an agent");
                self.recover(agent, Trigger::Watchdog { agent })
            }
        };
        // Selection errors here mean an incomplete policy; the state stays idle.
        if let Err(e) = result {
            log::warn!("timer {:?}: {e}", timer.kind);
        }
    }

    fn abort_plan(&mut self) {
        if let Some(mut active) = self.state.active_plan.take() {
            let dropped = active.truncate();
            self.stats.aborted_steps += dropped.len() as u32;
            self.pending.aborted.extend(dropped);
        }
        self.clear_timers(TimerKind::EpisodeTimeout);
        self.state.episode = Episode::Idle;
        self.pending.dirty = true;
    }

    /// Error recovery: abort the plan, return both agents to their neutral
    /// pose and replan. A healthy agent is reset only after its primitive ends.
    fn recover(&mut self, faulted: Agent, trigger: Trigger) -> Result<(), DmError> {
        self.stats.recoveries += 1;
        let episode = self.state.episode.kind();
        self.abort_plan();
        *self.state.status_mut(faulted) = AgentStatus::Error;
        self.in_flight[slot(faulted)] = None;
        self.clear_watchdog(faulted);
        for agent in Agent::BOTH {
            let busy = matches!(self.state.status(agent), AgentStatus::Executing(_));
            if agent != faulted && busy {
                self.reset_deferred[slot(agent)] = true;
            } else {
                self.send_reset(agent);
            }
        }
        self.reselect(trigger, None, episode)
    }

    fn send_reset(&mut self, agent: Agent) {
        self.reset_deferred[slot(agent)] = false;
        self.reset_awaited[slot(agent)] = true;
        self.emit_command(agent, CommandAction::Reset);
    }

    fn emit_command(&mut self, agent: Agent, action: CommandAction) {
        self.stats.commands += 1;
        self.pending.outputs.push(DmOutput::Command(AgentCommand { agent, action, t: self.state.clock }));
        self.pending.dirty = true;
    }

    fn on_lifecycle(&mut self, sig: &AgentLifecycleSignal) -> Result<(), DmError> {
        let agent = sig.agent;
        match &sig.phase {
            LifecyclePhase::Started => {
                if let Some(b) = &sig.behavior {
                    *self.state.status_mut(agent) = AgentStatus::Executing(b.clone());
                }
            }
            LifecyclePhase::Ended => {
                if *self.state.status(agent) != AgentStatus::Error {
                    *self.state.status_mut(agent) = AgentStatus::Idle;
                }
                self.clear_watchdog(agent);
                self.mark_step_ended(agent);
                if self.reset_deferred[slot(agent)] {
                    self.send_reset(agent);
                }
            }
            LifecyclePhase::Error { .. } => {
                let was_running = matches!(self.state.status(agent), AgentStatus::Executing(_));
                self.clear_watchdog(agent);
                if was_running && !self.stopped {
                    self.recover(agent, Trigger::AgentError { agent })?;
                } else {
                    *self.state.status_mut(agent) = AgentStatus::Error;
                }
            }
            LifecyclePhase::Reset { .. } => {
                *self.state.status_mut(agent) = AgentStatus::Idle;
                self.reset_awaited[slot(agent)] = false;
                self.reset_deferred[slot(agent)] = false;
            }
        }
        Ok(())
    }

    fn mark_step_ended(&mut self, agent: Agent) {
        let Some((plan_id, idx)) = self.in_flight[slot(agent)].take() else {
            return;
        };
        let (clock, aoi) = (self.state.clock, self.state.aoi);
        if let Some(active) = self.state.active_plan.as_mut().filter(|a| a.plan.id == plan_id) {
            if let Some(p) = active.progress.get_mut(idx) {
                p.ended_at = Some(clock);
                p.aoi_at_end = Some(aoi);
            }
        }
    }

    /// Time at which the cursor step becomes eligible, if determinable.
    fn next_step_time(&self) -> Option<u64> {
        if self.stopped {
            return None;
        }
        let active = self.state.active_plan.as_ref()?;
        let i = active.cursor;
        let step = active.plan.steps.get(i)?;
        if i == 0 {
            return Some(active.installed_at + step.timing.delay_ms());
        }
        let prev = &active.progress[i - 1];
        match step.timing {
            StepTiming::Previous { delay_ms } => prev.ended_at.map(|e| e + delay_ms),
            StepTiming::WithPrevious { delay_ms } => prev.dispatched_at.map(|d| d + delay_ms),
        }
    }

    fn agent_ready(&self, agent: Agent) -> bool {
        *self.state.status(agent) == AgentStatus::Idle
            && !self.reset_deferred[slot(agent)]
            && !self.reset_awaited[slot(agent)]
            && self.in_flight[slot(agent)].is_none()
    }

    /// Dispatches every step that is due and whose agent is free; completes
    /// the plan when all steps have ended.
    pub fn step_executor(&mut self) {
        loop {
            if self.stopped {
                return;
            }
            let Some(active) = self.state.active_plan.as_ref() else {
                return;
            };
            if active.is_finished() {
                if let Err(e) = self.complete_plan() {
                    log::warn!("replanning after completion: {e}");
                    return;
                }
                continue;
            }
            let i = active.cursor;
            let Some(step) = active.plan.steps.get(i).cloned() else {
                return;
            };
            let plan_id = active.plan.id;
            match self.next_step_time() {
                Some(e) if e <= self.state.clock => {}
                _ => return,
            }
            let ready = if i == 0 {
                Agent::BOTH.iter().all(|&a| self.agent_ready(a))
            } else {
                self.agent_ready(step.agent)
            };
            if !ready {
                return;
            }
            let clock = self.state.clock;
            let skip = step.condition == Some(StepCondition::AoiUnchanged)
                && i > 0
                && active.progress[i - 1].aoi_at_end.is_some_and(|a| a != self.state.aoi);
            let active = self.state.active_plan.as_mut().expect("checked above");
            active.cursor += 1;
            let progress = &mut active.progress[i];
            progress.dispatched_at = Some(clock);
            if skip {
                progress.skipped = true;
                progress.ended_at = Some(clock);
                progress.aoi_at_end = Some(self.state.aoi);
                self.pending.dirty = true;
                continue;
            }
            *self.state.status_mut(step.agent) = AgentStatus::Executing(step.behavior.clone());
            self.in_flight[slot(step.agent)] = Some((plan_id, i));
            self.arm(TimerKind::BehaviorWatchdog, self.config.watchdog_ms, Some(step.agent));
            self.emit_command(
                step.agent,
                CommandAction::Execute { behavior: step.behavior, target: step.target, plan_id, step: i },
            );
        }
    }

    fn complete_plan(&mut self) -> Result<(), DmError> {
        let active = self.state.active_plan.take().expect("active plan");
        self.clear_timers(TimerKind::EpisodeTimeout);
        self.state.episode = Episode::Idle;
        self.pending.dirty = true;
        self.reselect(Trigger::PlanCompleted, None, active.plan.episode.kind())
    }
}
