//! The session loop: advances the virtual clock from event to event and
//! routes every message through the bus.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError, TryRecvError};
use serde::{Deserialize, Serialize};

use super::baby::{PerceptionSource, ScriptedSource};
use super::scenario::{Condition, Scenario};
use super::trace::{SessionTrace, TraceHeader};
use super::SimError;
use crate::agents::{Agent, AgentExecutor, Fault};
use crate::behavior::{BehaviorCatalog, Origin, RawBehavior};
use crate::bus::{Subscription, Topic, TopicRegistry};
use crate::config::Config;
use crate::dm::{check_policy_coverage, check_template_catalog, DialogueManager, DmStats, EpisodeKind, InformationState, PolicyTable};
use crate::events::{Payload, SessionControl};
use crate::EventBus;

/// Input from a human operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorInput {
    Behavior { label: String },
    Control(SessionControl),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockMode {
    /// Jump from event to event.
    Fast,
    /// Pace events against the wall clock; `speed` 1.0 is real time.
    Realtime { speed: f64 },
}

pub struct RunOptions {
    pub mode: ClockMode,
    pub operator: Option<Receiver<OperatorInput>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { mode: ClockMode::Fast, operator: None }
    }
}

/// Everything that identifies a session apart from its perception source.
#[derive(Debug, Clone)]
pub struct SessionSetup {
    pub name: String,
    pub seed: u64,
    pub condition: Condition,
    pub duration_ms: u64,
    pub config: Config,
    pub policy_toml: String,
    pub faults: Vec<Fault>,
}

impl SessionSetup {
    pub fn from_scenario(scenario: &Scenario, config: &Config, policy_toml: &str) -> Self {
        Self {
            name: scenario.name.clone(),
            seed: scenario.seed,
            condition: scenario.condition,
            duration_ms: scenario.duration_ms(),
            config: config.clone(),
            policy_toml: policy_toml.to_string(),
            faults: scenario.faults(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EpisodeSummary {
    pub familiarization: u32,
    pub nursery_rhyme: u32,
    pub soothing: u32,
    pub attention_getting: u32,
    pub interrupts: u32,
    pub recoveries: u32,
    pub commands: u32,
}

impl EpisodeSummary {
    pub fn from_stats(stats: &DmStats) -> Self {
        let n = |k| stats.episodes.get(&k).copied().unwrap_or(0);
        Self {
            familiarization: n(EpisodeKind::Familiarization),
            nursery_rhyme: n(EpisodeKind::NurseryRhyme),
            soothing: n(EpisodeKind::Soothing),
            attention_getting: n(EpisodeKind::AttentionGetting),
            interrupts: stats.interrupts,
            recoveries: stats.recoveries,
            commands: stats.commands,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub trace: SessionTrace,
    pub stats: DmStats,
    pub summary: EpisodeSummary,
    pub final_state: InformationState,
    /// Commands an executor refused (busy, unknown behavior).
    pub rejected_commands: u32,
}

pub struct Session {
    setup: SessionSetup,
    bus: EventBus,
    dm: DialogueManager,
    executors: [AgentExecutor; 2],
    source: Box<dyn PerceptionSource + Send>,
    behaviors: BehaviorCatalog,
    rejected: u32,
}

struct Subs {
    trace: Subscription<Payload>,
    dm: Subscription<Payload>,
    commands: [Subscription<Payload>; 2],
    lifecycle: Subscription<Payload>,
}

impl Session {
    /// Validates the policy and builds all components. The bus is created here so
    /// external observers can subscribe before [`run`](Self::run).
    pub fn new(setup: SessionSetup, source: Box<dyn PerceptionSource + Send>) -> Result<Self, SimError> {
        let behaviors = BehaviorCatalog::default();
        setup.config.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let policy = PolicyTable::from_toml(&setup.policy_toml, &behaviors)?;
        let report = check_policy_coverage(&policy, &behaviors);
        if !report.is_total() {
            let uncovered = report
                .uncovered()
                .map(|r| format!("({:?}, {:?}, {})", r.aoi, r.readiness, r.behavior.as_deref().unwrap_or("absent")))
                .collect();
            return Err(SimError::PolicyIncomplete(uncovered));
        }
        let catalog = Arc::new(setup.config.agents.catalog().map_err(|e| SimError::InvalidConfig(e.to_string()))?);
        check_template_catalog(&catalog)?;
        let dm = DialogueManager::new(setup.config.dm.clone(), Arc::new(policy), catalog.clone(), setup.seed);
        let executors = [
            AgentExecutor::new(Agent::Avatar, catalog.clone(), &setup.faults),
            AgentExecutor::new(Agent::Robot, catalog, &setup.faults),
        ];
        Ok(Self {
            bus: EventBus::new(TopicRegistry::default()),
            setup,
            dm,
            executors,
            source,
            behaviors,
            rejected: 0,
        })
    }

    pub fn bus(&self) -> EventBus {
        self.bus.clone()
    }

    fn publish(&self, payload: Payload, source: &str) -> Result<(), SimError> {
        self.bus.publish_to(payload.topic(), payload, source)?;
        Ok(())
    }

    fn publish_dm(&self, outputs: Vec<crate::dm::DmOutput>) -> Result<(), SimError> {
        for o in outputs {
            self.publish(o.into_payload(), "dm")?;
        }
        Ok(())
    }

    /// Delivers messages until no component has anything left to say at `t`.
    fn settle(&mut self, subs: &mut Subs, t: u64, records: &mut Vec<crate::events::Message>) -> Result<(), SimError> {
        loop {
            let mut progressed = false;
            for msg in subs.dm.drain()? {
                progressed = true;
                if !matches!(
                    msg.topic,
                    Topic::PerceptionAoi
                        | Topic::PerceptionThermal
                        | Topic::PerceptionBehavior
                        | Topic::AvatarLifecycle
                        | Topic::RobotLifecycle
                        | Topic::SessionControl
                ) {
                    continue;
                }
                match self.dm.handle(&msg.payload, msg.timestamp) {
                    Ok(out) => self.publish_dm(out)?,
                    Err(e) => log::warn!("dialogue manager rejected {} #{}: {e}", msg.topic, msg.seq),
                }
            }
            for i in 0..2 {
                for msg in subs.commands[i].drain()? {
                    progressed = true;
                    let Payload::Command(cmd) = &msg.payload else { continue };
                    match self.executors[i].handle(cmd, t) {
                        Ok(signals) => {
                            let name = self.executors[i].agent().lower();
                            for s in signals {
                                self.publish(Payload::Lifecycle(s), name)?;
                            }
                        }
                        Err(e) => {
                            self.rejected += 1;
                            log::warn!("{e}");
                        }
                    }
                }
            }
            for msg in subs.lifecycle.drain()? {
                progressed = true;
                if let Payload::Lifecycle(sig) = &msg.payload {
                    self.source.observe(sig);
                }
            }
            if !progressed {
                break;
            }
        }
        records.extend(subs.trace.drain()?);
        Ok(())
    }

    fn next_time(&self) -> Option<u64> {
        [self.source.next_time(), self.dm.next_wakeup(), self.executors[0].next_due(), self.executors[1].next_due()]
            .into_iter()
            .flatten()
            .min()
    }

    /// Advances every component to `t` and settles.
    fn step(&mut self, subs: &mut Subs, t: u64, records: &mut Vec<crate::events::Message>) -> Result<(), SimError> {
        self.bus.advance_to(t)?;
        for i in 0..2 {
            let name = self.executors[i].agent().lower();
            for s in self.executors[i].advance(t) {
                self.publish(Payload::Lifecycle(s), name)?;
            }
        }
        for (p, src) in self.source.emit_due(t) {
            self.publish(p, &src)?;
        }
        let out = self.dm.advance_to(t);
        self.publish_dm(out)?;
        self.settle(subs, t, records)
    }

    fn inject(&mut self, input: OperatorInput, t: u64) -> Result<(), SimError> {
        let payload = match input {
            OperatorInput::Behavior { label } => {
                match self.behaviors.validate_event(&RawBehavior { t, label }, Origin::Operator) {
                    Ok(ev) => Payload::Behavior(ev),
                    Err(e) => {
                        log::warn!("operator input dropped: {e}");
                        return Ok(());
                    }
                }
            }
            OperatorInput::Control(c) => Payload::Control(c),
        };
        self.publish(payload, "operator")
    }

    pub fn run(mut self, opts: RunOptions) -> Result<SessionOutcome, SimError> {
        let mut subs = Subs {
            trace: self.bus.subscribe("*")?,
            dm: self.bus.subscribe("*")?,
            commands: [self.bus.subscribe("dm.command.avatar")?, self.bus.subscribe("dm.command.robot")?],
            lifecycle: self.bus.subscribe("agent.*")?,
        };
        let mut records = Vec::new();
        let end = self.setup.duration_ms;
        let mut operator = opts.operator;
        let wall_start = Instant::now();

        self.bus.start(0);
        for (p, src) in self.source.emit_due(0) {
            self.publish(p, &src)?;
        }
        let out = self.dm.start(0);
        self.publish_dm(out)?;
        self.settle(&mut subs, 0, &mut records)?;

        loop {
            let Some(t) = self.next_time().filter(|&t| t <= end) else { break };
            if let Some(rx) = operator.as_ref() {
                match opts.mode {
                    ClockMode::Fast => loop {
                        match rx.try_recv() {
                            Ok(input) => {
                                let now = self.bus.now();
                                self.inject(input, now)?;
                                self.settle(&mut subs, now, &mut records)?;
                            }
                            Err(TryRecvError::Empty) => break,
                            Err(TryRecvError::Disconnected) => {
                                operator = None;
                                break;
                            }
                        }
                    },
                    ClockMode::Realtime { speed } => {
                        let deadline = wall_start + Duration::from_secs_f64(t as f64 / 1000.0 / speed);
                        match rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
                            Ok(input) => {
                                let elapsed = (wall_start.elapsed().as_secs_f64() * 1000.0 * speed) as u64;
                                let now = elapsed.clamp(self.bus.now(), t);
                                self.step(&mut subs, now, &mut records)?;
                                self.inject(input, now)?;
                                self.settle(&mut subs, now, &mut records)?;
                                continue;
                            }
                            Err(RecvTimeoutError::Timeout) => {}
                            Err(RecvTimeoutError::Disconnected) => operator = None,
                        }
                    }
                }
            }
            if let (ClockMode::Realtime { speed }, None) = (opts.mode, operator.as_ref()) {
                let deadline = wall_start + Duration::from_secs_f64(t as f64 / 1000.0 / speed);
                std::thread::sleep(deadline.saturating_duration_since(Instant::now()));
            }
            self.step(&mut subs, t, &mut records)?;
        }
        records.extend(subs.trace.drain()?);

        let header = TraceHeader::new(
            &self.setup.name,
            self.setup.seed,
            self.setup.condition,
            end,
            &self.setup.config,
            &self.setup.policy_toml,
            &self.setup.faults,
        );
        let stats = self.dm.stats().clone();
        Ok(SessionOutcome {
            trace: SessionTrace::new(header, records),
            summary: EpisodeSummary::from_stats(&stats),
            stats,
            final_state: self.dm.state().clone(),
            rejected_commands: self.rejected,
        })
    }
}

/// Runs a scenario in fast mode.
pub fn run_session(scenario: &Scenario, config: &Config, policy_toml: &str) -> Result<SessionOutcome, SimError> {
    let setup = SessionSetup::from_scenario(scenario, config, policy_toml);
    let source = ScriptedSource::new(scenario, config)?;
    Session::new(setup, Box::new(source))?.run(RunOptions::default())
}
