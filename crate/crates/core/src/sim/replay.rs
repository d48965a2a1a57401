//! Deterministic replay of a recorded session and a plain-text timeline view.

use serde::Serialize;

use super::baby::RecordedSource;
use super::runner::{RunOptions, Session, SessionSetup};
use super::trace::SessionTrace;
use super::SimError;
use crate::agents::{CommandAction, LifecyclePhase};
use crate::config::{config_hash, Config};
use crate::events::{Message, Payload, SessionControl};

/// First point where regenerated commands differ from the recorded ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    /// Index into the trace records of the first mismatching recorded command,
    /// or the record count when the recording ran out first.
    pub record_index: usize,
    pub expected: Option<String>,
    pub got: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    /// Whether the recorded digest matches the trace contents.
    pub digest_valid: bool,
    pub warnings: Vec<String>,
    pub commands_compared: usize,
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn is_match(&self) -> bool {
        self.digest_valid && self.divergence.is_none()
    }
}

/// Re-runs the dialogue manager and executors against the recorded perception
/// stream and compares the issued commands.
pub fn replay(trace: &SessionTrace, config_override: Option<&Config>) -> Result<ReplayReport, SimError> {
    let header = &trace.header;
    let mut warnings = Vec::new();
    let digest_valid = trace.compute_hash() == header.trace_sha256;
    let config = match config_override {
        Some(c) => {
            if config_hash(c, &header.policy) != header.config_hash {
                warnings.push("config differs from the recorded one; divergence is expected".to_string());
            }
            c.clone()
        }
        None => {
            if config_hash(&header.config, &header.policy) != header.config_hash {
                warnings.push("recorded config hash does not match the recorded config".to_string());
            }
            header.config.clone()
        }
    };
    let setup = SessionSetup {
        name: header.scenario.clone(),
        seed: header.seed,
        condition: header.condition,
        duration_ms: header.duration_ms,
        config,
        policy_toml: header.policy.clone(),
        faults: header.faults.clone(),
    };
    let source = RecordedSource::new(&trace.records);
    let outcome = Session::new(setup, Box::new(source))?.run(RunOptions::default())?;

    let recorded = trace.commands();
    let regenerated = outcome.trace.commands();
    let key = |m: &Message| describe(m);
    let mut divergence = None;
    let n = recorded.len().max(regenerated.len());
    let mut compared = 0;
    for i in 0..n {
        let a = recorded.get(i).map(|(_, m, _)| key(m));
        let b = regenerated.get(i).map(|(_, m, _)| key(m));
        if a != b {
            divergence = Some(Divergence {
                record_index: recorded.get(i).map_or(trace.records.len(), |(idx, _, _)| *idx),
                expected: a,
                got: b,
            });
            break;
        }
        compared += 1;
    }
    Ok(ReplayReport { digest_valid, warnings, commands_compared: compared, divergence })
}

/// One-line description of a bus message.
pub fn describe(m: &Message) -> String {
    let body = match &m.payload {
        Payload::Aoi(e) => format!(
            "{} fixated={} valid={:.2} [{}..{}]",
            e.label, e.fixated, e.valid_fraction, e.window_start, e.window_end
        ),
        Payload::Readiness(e) => match e.slope {
            Some(s) => format!("{:?} slope={s:+.4} C/s", e.state),
            None => format!("{:?}", e.state),
        },
        Payload::Behavior(b) => format!("{} ({:?}, {})", b.label, b.policy_class, serde_json::to_string(&b.origin).unwrap_or_default()),
        Payload::Lifecycle(s) => {
            let what = s.behavior.as_deref().unwrap_or("-");
            match &s.phase {
                LifecyclePhase::Started => format!("started {what}"),
                LifecyclePhase::Ended => format!("ended {what}"),
                LifecyclePhase::Error { reason } => format!("error {what}: {reason}"),
                LifecyclePhase::Reset { pose } => format!("reset to {pose:?}"),
            }
        }
        Payload::Command(c) => match &c.action {
            CommandAction::Execute { behavior, target, plan_id, step } => match target {
                Some(t) => format!("execute {behavior} -> {t:?} (plan {plan_id} step {step})"),
                None => format!("execute {behavior} (plan {plan_id} step {step})"),
            },
            CommandAction::Reset => "reset".to_string(),
        },
        Payload::State(s) => {
            let plan = s
                .state
                .active_plan
                .as_ref()
                .map(|p| format!("plan {} {:?} {}/{}", p.plan.id, p.plan.template, p.cursor, p.plan.steps.len()))
                .unwrap_or_else(|| "no plan".into());
            let mut line = format!(
                "{} | {} aoi={} readiness={:?} {plan}",
                s.cause, s.state.episode, s.state.aoi, s.state.readiness
            );
            for sel in &s.selections {
                line.push_str(&format!(" | selected {:?} via {}", sel.template, sel.rule));
            }
            if !s.discarded.is_empty() {
                line.push_str(&format!(" | discarded {}", s.discarded.len()));
            }
            if !s.aborted.is_empty() {
                line.push_str(&format!(" | aborted {}", s.aborted.len()));
            }
            line
        }
        Payload::Timer(t) => format!("{:?} #{} fired (armed at {})", t.kind, t.id, t.created_at),
        Payload::Control(c) => match c {
            SessionControl::ParentJoined { joined } => format!("parent joined={joined}"),
            SessionControl::Start => "start".into(),
            SessionControl::Stop => "stop".into(),
        },
    };
    format!("{:>9.3}s {:<22} {}", m.timestamp as f64 / 1000.0, m.topic.as_str(), body)
}

/// Timeline of a trace, one line per record.
pub fn render_timeline(trace: &SessionTrace) -> String {
    let h = &trace.header;
    let mut out = format!(
        "# {} seed={} condition={:?} duration={}ms records={}\n",
        h.scenario,
        h.seed,
        h.condition,
        h.duration_ms,
        trace.records.len()
    );
    for m in &trace.records {
        out.push_str(&describe(m));
        out.push('\n');
    }
    out
}
