//! Perception sources: the scripted baby (segments, timed behaviors and
//! reactions to agent behavior) and the recorded source used for replay.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::{ms, Channel, GazeTarget, ReactionRule, Scenario};
use crate::agents::{AgentLifecycleSignal, LifecyclePhase};
use crate::behavior::{BehaviorCatalog, Origin, RawBehavior};
use crate::config::Config;
use crate::events::{Message, Payload, SessionControl};
use crate::gaze::{sample_time, GazeWindower};
use crate::{AoiGeometry, GazeClassifier, GazeSample, ThermalParams, ThermalSample, ThermalStream};

/// Producer of perception and session-control events on the session clock.
pub trait PerceptionSource {
    /// Time of the next event, if any.
    fn next_time(&self) -> Option<u64>;
    /// All events stamped at or before `t`, in publication order, with their source name.
    fn emit_due(&mut self, t: u64) -> Vec<(Payload, String)>;
    /// Agent lifecycle signals, for sources that react to the agents.
    fn observe(&mut self, _signal: &AgentLifecycleSignal) {}
}

/// A scheduled response of the scripted baby.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub at: u64,
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Gaze { target: GazeTarget, hold_ms: u64 },
    Behavior(String),
}

/// Applies the reaction rules to one observed agent signal. Each matching rule
/// consumes one uniform draw for its probability test, plus one latency draw
/// when it fires without a fixed latency.
pub fn scripted_baby_step<R: Rng>(rules: &[ReactionRule], observed: &AgentLifecycleSignal, rng: &mut R) -> Vec<Emission> {
    if observed.phase != LifecyclePhase::Started {
        return Vec::new();
    }
    let Some(behavior) = observed.behavior.as_deref() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for rule in rules {
        if rule.agent != observed.agent || rule.on != behavior || observed.t < ms(rule.active_from_s) {
            continue;
        }
        let u: f64 = rng.gen();
        if u >= rule.p {
            continue;
        }
        let latency = rule.latency_ms.unwrap_or_else(|| rng.gen_range(500..=2000));
        let response = match rule.channel {
            Channel::Aoi => Response::Gaze { target: gaze_target(&rule.value), hold_ms: rule.hold_ms },
            Channel::Behavior => Response::Behavior(rule.value.clone()),
        };
        out.push(Emission { at: observed.t + latency, response });
    }
    out
}

fn gaze_target(value: &str) -> GazeTarget {
    match value {
        "Robot" => GazeTarget::Robot,
        "Avatar" => GazeTarget::Avatar,
        "InBetween" => GazeTarget::InBetween,
        "Outside" => GazeTarget::Outside,
        _ => GazeTarget::Lost,
    }
}

/// Independent generator streams derived from the scenario seed.
pub mod streams {
    pub const DM: u64 = 1;
    pub const GAZE: u64 = 2;
    pub const THERMAL: u64 = 3;
    pub const REACTIONS: u64 = 4;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const OVERRIDE_JITTER: f64 = 0.004;

#[derive(Debug, Clone)]
struct GazeOverride {
    from: u64,
    until: u64,
    target: GazeTarget,
}

/// Scenario-driven baby. Gaze is expanded at the tracker rate and windowed;
/// thermal is expanded at the camera rate and classified every hop.
pub struct ScriptedSource {
    scenario: Scenario,
    catalog: BehaviorCatalog,
    geometry: AoiGeometry,
    windower: GazeWindower<f64>,
    gaze_rate: f64,
    window_ms: u64,
    thermal: ThermalStream,
    thermal_params: ThermalParams,
    gaze_rng: ChaCha8Rng,
    thermal_rng: ChaCha8Rng,
    reaction_rng: ChaCha8Rng,
    end: u64,
    started: bool,
    stopped: bool,
    next_gaze: u64,
    gaze_k: u64,
    next_thermal: u64,
    thermal_k: u64,
    behavior_cursor: usize,
    parent_pending: Option<u64>,
    overrides: Vec<GazeOverride>,
    reactions: BTreeMap<(u64, u64), String>,
    reaction_seq: u64,
}

impl ScriptedSource {
    pub fn new(scenario: &Scenario, config: &Config) -> Result<Self, super::SimError> {
        let geometry = config.aoi.geometry().map_err(|e| super::SimError::InvalidScenario(e.to_string()))?;
        let params = config.aoi.params();
        let classifier = GazeClassifier::new(geometry.clone(), params.clone());
        Ok(Self {
            catalog: BehaviorCatalog::default(),
            geometry,
            windower: GazeWindower::new(classifier),
            gaze_rate: params.sample_rate_hz,
            window_ms: params.window_ms,
            thermal: ThermalStream::new(config.thermal.clone()),
            thermal_params: config.thermal.clone(),
            gaze_rng: stream_rng(scenario.seed, streams::GAZE),
            thermal_rng: stream_rng(scenario.seed, streams::THERMAL),
            reaction_rng: stream_rng(scenario.seed, streams::REACTIONS),
            end: scenario.duration_ms(),
            started: false,
            stopped: false,
            next_gaze: params.window_ms,
            gaze_k: 0,
            next_thermal: config.thermal.hop_ms,
            thermal_k: 0,
            behavior_cursor: 0,
            parent_pending: scenario.parent_joined_at_s.map(ms),
            overrides: Vec::new(),
            reactions: BTreeMap::new(),
            reaction_seq: 0,
            scenario: scenario.clone(),
        })
    }

    fn gaze_sample(&mut self, t: u64) -> GazeSample {
        let now_s = t as f64 / 1000.0;
        let active = self.overrides.iter().rev().find(|o| o.from <= t && t < o.until).map(|o| (o.target, OVERRIDE_JITTER, 1.0));
        let segment = || {
            self.scenario
                .gaze
                .iter()
                .find(|g| g.from_s <= now_s && now_s < g.to_s)
                .map(|g| (g.target, g.jitter, g.valid_fraction))
        };
        let Some((target, jitter, valid_fraction)) = active.or_else(segment) else {
            return GazeSample::lost(t);
        };
        let Some(aoi) = target.aoi() else {
            return GazeSample::lost(t);
        };
        if self.gaze_rng.gen::<f64>() >= valid_fraction {
            return GazeSample::lost(t);
        }
        let anchor = self.geometry.anchor(aoi);
        let noise = Normal::new(0.0, jitter).expect("non-negative jitter");
        let x = (anchor.x + noise.sample(&mut self.gaze_rng)).clamp(0.0, 1.0);
        let y = (anchor.y + noise.sample(&mut self.gaze_rng)).clamp(0.0, 1.0);
        GazeSample::at(t, x, y)
    }

    fn thermal_sample(&mut self, t: u64) -> ThermalSample {
        let now_s = t as f64 / 1000.0;
        let Some(seg) = self.scenario.thermal.iter().find(|s| s.from_s <= now_s && now_s < s.to_s).cloned() else {
            return ThermalSample::lost(t);
        };
        if self.thermal_rng.gen::<f64>() >= seg.valid_fraction {
            return ThermalSample::lost(t);
        }
        let frac = (now_s - seg.from_s) / (seg.to_s - seg.from_s);
        let noise = Normal::new(0.0, seg.noise).expect("non-negative noise");
        let temp = seg.start_c + (seg.end_c - seg.start_c) * frac + noise.sample(&mut self.thermal_rng);
        ThermalSample::at(t, temp)
    }

    fn emit_gaze_window(&mut self) -> Option<Payload> {
        let boundary = self.next_gaze;
        self.next_gaze += self.window_ms;
        let mut event = None;
        loop {
            let t = sample_time(self.gaze_k, self.gaze_rate);
            if t >= boundary {
                break;
            }
            self.gaze_k += 1;
            let s = self.gaze_sample(t);
            if let Some(ev) = self.windower.push(s) {
                event = Some(ev);
            }
        }
        event.map(Payload::Aoi)
    }

    fn emit_thermal(&mut self) -> Payload {
        let boundary = self.next_thermal;
        self.next_thermal += self.thermal_params.hop_ms;
        loop {
            let t = sample_time(self.thermal_k, self.thermal_params.sample_rate_hz);
            if t >= boundary {
                break;
            }
            self.thermal_k += 1;
            let s = self.thermal_sample(t);
            self.thermal.push(s);
        }
        Payload::Readiness(self.thermal.emit(boundary))
    }

    fn behavior_payload(&self, t: u64, label: &str) -> Option<Payload> {
        let raw = RawBehavior { t, label: label.to_string() };
        self.catalog.validate_event(&raw, Origin::Scripted).ok().map(Payload::Behavior)
    }

    fn next_scripted(&self) -> Option<u64> {
        self.scenario.behaviors.get(self.behavior_cursor).map(|b| ms(b.at_s))
    }
}

fn min_opt(a: Option<u64>, b: Option<u64>) -> Option<u64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

impl PerceptionSource for ScriptedSource {
    fn next_time(&self) -> Option<u64> {
        if self.stopped {
            return None;
        }
        if !self.started {
            return Some(0);
        }
        let mut next = Some(self.end);
        for t in [
            Some(self.next_gaze),
            Some(self.next_thermal),
            self.next_scripted(),
            self.parent_pending,
            self.reactions.keys().next().map(|k| k.0),
        ] {
            next = min_opt(next, t.filter(|&t| t <= self.end));
        }
        next
    }

    fn emit_due(&mut self, t: u64) -> Vec<(Payload, String)> {
        let mut out = Vec::new();
        while let Some(now) = self.next_time().filter(|&n| n <= t) {
            if !self.started {
                self.started = true;
                out.push((Payload::Control(SessionControl::Start), "harness".to_string()));
                continue;
            }
            if self.next_gaze == now {
                if let Some(p) = self.emit_gaze_window() {
                    out.push((p, "gaze".to_string()));
                }
            }
            if self.next_thermal == now {
                out.push((self.emit_thermal(), "thermal".to_string()));
            }
            while self.next_scripted() == Some(now) {
                let label = self.scenario.behaviors[self.behavior_cursor].label.clone();
                self.behavior_cursor += 1;
                if let Some(p) = self.behavior_payload(now, &label) {
                    out.push((p, "scripted-baby".to_string()));
                }
            }
            while let Some(entry) = self.reactions.first_entry().filter(|e| e.key().0 == now) {
                let label = entry.remove();
                if let Some(p) = self.behavior_payload(now, &label) {
                    out.push((p, "scripted-baby".to_string()));
                }
            }
            if self.parent_pending == Some(now) {
                self.parent_pending = None;
                out.push((Payload::Control(SessionControl::ParentJoined { joined: true }), "harness".to_string()));
            }
            if now == self.end {
                self.stopped = true;
                out.push((Payload::Control(SessionControl::Stop), "harness".to_string()));
            }
        }
        out
    }

    fn observe(&mut self, signal: &AgentLifecycleSignal) {
        for em in scripted_baby_step(&self.scenario.reactions, signal, &mut self.reaction_rng) {
            match em.response {
                Response::Gaze { target, hold_ms } => {
                    self.overrides.push(GazeOverride { from: em.at, until: em.at + hold_ms, target });
                }
                Response::Behavior(label) => {
                    self.reaction_seq += 1;
                    self.reactions.insert((em.at, self.reaction_seq), label);
                }
            }
        }
    }
}

/// Re-emits the perception and session-control records of a trace at their
/// recorded timestamps.
pub struct RecordedSource {
    records: Vec<Message>,
    cursor: usize,
}

impl RecordedSource {
    pub fn new(records: &[Message]) -> Self {
        let records = records.iter().filter(|m| is_input_topic(m)).cloned().collect();
        Self { records, cursor: 0 }
    }
}

/// Records a session re-feeds on replay: perception and session control.
pub fn is_input_topic(m: &Message) -> bool {
    use crate::bus::Topic;
    matches!(
        m.topic,
        Topic::PerceptionAoi | Topic::PerceptionThermal | Topic::PerceptionBehavior | Topic::SessionControl
    )
}

impl PerceptionSource for RecordedSource {
    fn next_time(&self) -> Option<u64> {
        self.records.get(self.cursor).map(|m| m.timestamp)
    }

    fn emit_due(&mut self, t: u64) -> Vec<(Payload, String)> {
        let mut out = Vec::new();
        while let Some(m) = self.records.get(self.cursor).filter(|m| m.timestamp <= t) {
            out.push((m.payload.clone(), m.source.clone()));
            self.cursor += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Agent;

    fn rule(p: f64, latency: Option<u64>) -> ReactionRule {
        ReactionRule {
            on: "LookAtMe".into(),
            agent: Agent::Avatar,
            channel: Channel::Aoi,
            value: "Avatar".into(),
            p,
            latency_ms: latency,
            hold_ms: 3000,
            active_from_s: 0.0,
        }
    }

    fn started(t: u64) -> AgentLifecycleSignal {
        AgentLifecycleSignal { agent: Agent::Avatar, behavior: Some("LookAtMe".into()), phase: LifecyclePhase::Started, t }
    }

    #[test]
    fn certain_rule_fires_after_latency() {
        let mut rng = stream_rng(1, streams::REACTIONS);
        let out = scripted_baby_step(&[rule(1.0, Some(1000))], &started(5000), &mut rng);
        assert_eq!(out, [Emission { at: 6000, response: Response::Gaze { target: GazeTarget::Avatar, hold_ms: 3000 } }]);
    }

    #[test]
    fn impossible_rule_never_fires() {
        let mut rng = stream_rng(9, streams::REACTIONS);
        for t in 0..1000 {
            assert!(scripted_baby_step(&[rule(0.0, None)], &started(t), &mut rng).is_empty());
        }
    }

    #[test]
    fn seeded_fire_count_matches_reference_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let fired: usize = (0..100)
            .map(|i| scripted_baby_step(&[rule(0.7, Some(800))], &started(i * 10_000), &mut rng).len())
            .sum();
        let mut reference = ChaCha8Rng::seed_from_u64(42);
        let expected = (0..100).filter(|_| reference.gen::<f64>() < 0.7).count();
        assert_eq!(fired, expected);
        assert!((50..90).contains(&fired), "{fired}");
    }

    #[test]
    fn only_started_signals_trigger() {
        let mut rng = stream_rng(1, streams::REACTIONS);
        let mut ended = started(100);
        ended.phase = LifecyclePhase::Ended;
        assert!(scripted_baby_step(&[rule(1.0, Some(10))], &ended, &mut rng).is_empty());
        let mut late = rule(1.0, Some(10));
        late.active_from_s = 10.0;
        assert!(scripted_baby_step(&[late], &started(9_999), &mut rng).is_empty());
    }
}
