#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rave_core::agents::{CommandAction, FaultKind, LifecyclePhase};
use rave_core::behavior::{BehaviorCatalog, Origin, RawBehavior};
use rave_core::dm::Trigger;
use rave_core::events::{Message, Payload};
use rave_core::gaze::AoiCounts;
use rave_core::sim::{
    Channel, Condition, FaultEntry, GazeSegment, GazeTarget, ReactionRule, Scenario, SessionTrace, ThermalSegment,
    TimedBehavior,
};
use rave_core::{Agent, AgentCatalog, Aoi, AoiWindowEvent, Readiness, ReadinessEvent};

pub fn aoi_payload(label: Aoi, fixated: bool, t: u64) -> Payload {
    Payload::Aoi(AoiWindowEvent {
        window_start: t.saturating_sub(500),
        window_end: t,
        label,
        fixated,
        counts: AoiCounts::default(),
        valid_fraction: 1.0,
    })
}

pub fn readiness_payload(state: Readiness, t: u64) -> Payload {
    let slope = match state.sign() {
        1 => Some(0.01),
        -1 => Some(-0.01),
        _ => None,
    };
    Payload::Readiness(ReadinessEvent { window_end: t, state, slope, valid_fraction: 1.0 })
}

pub fn behavior_payload(label: &str, t: u64) -> Payload {
    let ev = BehaviorCatalog::default()
        .validate_event(&RawBehavior { t, label: label.into() }, Origin::Scripted)
        .expect("known label");
    Payload::Behavior(ev)
}

const TARGETS: [GazeTarget; 5] =
    [GazeTarget::Robot, GazeTarget::Avatar, GazeTarget::InBetween, GazeTarget::Outside, GazeTarget::Lost];

/// A random but valid scenario: piecewise gaze and thermal, scripted
/// behaviors, reaction rules and agent faults.
pub fn random_scenario(seed: u64, duration_s: f64, hang: bool) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<String> = BehaviorCatalog::default().labels().map(String::from).collect();
    let agents = AgentCatalog::default();

    let mut gaze = Vec::new();
    let mut t = 0.0;
    while t < duration_s {
        let end = (t + rng.gen_range(1.0..12.0_f64)).min(duration_s);
        gaze.push(GazeSegment {
            from_s: t,
            to_s: end,
            target: *TARGETS.choose(&mut rng).unwrap(),
            jitter: rng.gen_range(0.0..0.03),
            valid_fraction: rng.gen_range(0.6..=1.0),
        });
        t = end;
    }
    let mut thermal = Vec::new();
    let mut t = 0.0;
    let mut temp = rng.gen_range(32.0..35.0);
    while t < duration_s {
        let end = (t + rng.gen_range(5.0..30.0_f64)).min(duration_s);
        let next = temp + rng.gen_range(-0.02..0.02) * (end - t);
        thermal.push(ThermalSegment {
            from_s: t,
            to_s: end,
            start_c: temp,
            end_c: next,
            noise: rng.gen_range(0.0..0.02),
            valid_fraction: rng.gen_range(0.7..=1.0),
        });
        temp = next;
        t = end;
    }
    let mut behaviors: Vec<TimedBehavior> = (0..rng.gen_range(0..15))
        .map(|_| TimedBehavior {
            at_s: (rng.gen_range(0.2..duration_s) * 10.0).round() / 10.0,
            label: labels.choose(&mut rng).unwrap().clone(),
        })
        .collect();
    behaviors.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));

    let mut reactions = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let agent = *Agent::BOTH.choose(&mut rng).unwrap();
        let names: Vec<_> = agents.behaviors(agent).map(|b| b.name.clone()).collect();
        let channel = if rng.gen_bool(0.5) { Channel::Aoi } else { Channel::Behavior };
        let value = match channel {
            Channel::Aoi => format!("{:?}", TARGETS[..4].choose(&mut rng).unwrap()),
            Channel::Behavior => labels.choose(&mut rng).unwrap().clone(),
        };
        reactions.push(ReactionRule {
            on: names.choose(&mut rng).unwrap().clone(),
            agent,
            channel,
            value,
            p: rng.gen_range(0.0..=1.0),
            latency_ms: if rng.gen_bool(0.5) { Some(rng.gen_range(1..3000)) } else { None },
            hold_ms: rng.gen_range(500..5000),
            active_from_s: 0.0,
        });
    }

    let mut faults = Vec::new();
    for _ in 0..rng.gen_range(0..3) {
        let agent = *Agent::BOTH.choose(&mut rng).unwrap();
        let names: Vec<_> = agents.behaviors(agent).map(|b| b.name.clone()).collect();
        faults.push(FaultEntry {
            agent,
            behavior: names.choose(&mut rng).unwrap().clone(),
            after_s: rng.gen_range(0.0..duration_s),
            kind: FaultKind::Error,
        });
    }
    if hang {
        let agent = *Agent::BOTH.choose(&mut rng).unwrap();
        let behavior = if agent == Agent::Robot { "GazeLeft" } else { "Wave" };
        faults.push(FaultEntry { agent, behavior: behavior.into(), after_s: rng.gen_range(0.0..duration_s / 2.0), kind: FaultKind::Hang });
    }

    let parent = rng.gen_bool(0.3).then(|| rng.gen_range(0.0..duration_s));
    let s = Scenario {
        schema: 1,
        name: format!("random-{seed}"),
        seed,
        duration_s,
        condition: if parent.is_some() { Condition::ThreeWay } else { Condition::TwoWay },
        parent_joined_at_s: parent,
        gaze,
        thermal,
        behaviors,
        reactions,
        faults,
    };
    s.validate(&BehaviorCatalog::default(), &agents).expect("generated scenario is valid");
    s
}

/// Violations of the preemption contract in a trace:
/// steps are discarded only by a baby-behavior interrupt, and no command
/// reaches an agent between its Started and the matching terminal signal,
/// except the watchdog reset of a hung agent.
pub fn preemption_violations(trace: &SessionTrace) -> Vec<String> {
    let mut out = Vec::new();
    let mut executing: BTreeMap<Agent, (String, u64)> = BTreeMap::new();
    let mut watchdog_fired_for: BTreeMap<Agent, u64> = BTreeMap::new();
    for (i, m) in trace.records.iter().enumerate() {
        match &m.payload {
            Payload::State(s) if !s.discarded.is_empty() => {
                let by_behavior = s.cause == "behavior"
                    && s.selections.first().is_some_and(|sel| matches!(sel.trigger, Trigger::Behavior { .. }));
                if !by_behavior {
                    out.push(format!("record {i}: {} steps discarded on `{}`", s.discarded.len(), s.cause));
                }
            }
            Payload::Timer(t) => {
                if let Some(a) = t.agent {
                    watchdog_fired_for.insert(a, m.timestamp);
                }
            }
            Payload::Lifecycle(sig) => match &sig.phase {
                LifecyclePhase::Started => {
                    executing.insert(sig.agent, (sig.behavior.clone().unwrap_or_default(), m.timestamp));
                }
                p if p.is_terminal() => {
                    executing.remove(&sig.agent);
                }
                _ => {}
            },
            Payload::Command(c) => {
                if let Some((behavior, since)) = executing.get(&c.agent) {
                    let watchdog_reset = matches!(c.action, CommandAction::Reset)
                        && watchdog_fired_for.get(&c.agent).is_some_and(|&w| w == m.timestamp && w > *since);
                    if !watchdog_reset {
                        out.push(format!("record {i}: command to {} while executing {behavior}", c.agent));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

pub fn commands(trace: &SessionTrace) -> Vec<&Message> {
    trace.records.iter().filter(|m| matches!(m.payload, Payload::Command(_))).collect()
}
