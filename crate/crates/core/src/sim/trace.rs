//! Append-only session traces: a header line followed by one bus message per
//! line, sealed with a SHA-256 over the canonical serialization.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::Condition;
use super::SimError;
use crate::agents::{AgentCommand, Fault};
use crate::config::{config_hash, Config};
use crate::events::{Message, Payload};

pub const TRACE_FORMAT: &str = "rave-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub artifact_version: String,
    pub scenario: String,
    pub seed: u64,
    pub condition: Condition,
    pub duration_ms: u64,
    pub config_hash: String,
    pub config: Config,
    pub policy: String,
    pub faults: Vec<Fault>,
    /// Digest of the header (with this field empty) and every record line.
    pub trace_sha256: String,
}

impl TraceHeader {
    pub fn new(
        scenario: &str,
        seed: u64,
        condition: Condition,
        duration_ms: u64,
        config: &Config,
        policy: &str,
        faults: &[Fault],
    ) -> Self {
        Self {
            format: TRACE_FORMAT.to_string(),
            version: TRACE_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: scenario.to_string(),
            seed,
            condition,
            duration_ms,
            config_hash: config_hash(config, policy),
            config: config.clone(),
            policy: policy.to_string(),
            faults: faults.to_vec(),
            trace_sha256: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub header: TraceHeader,
    pub records: Vec<Message>,
}

fn line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("trace values serialize")
}

impl SessionTrace {
    pub fn new(header: TraceHeader, records: Vec<Message>) -> Self {
        let mut t = Self { header, records };
        t.seal();
        t
    }

    /// Digest of the canonical byte serialization, ignoring the stored digest.
    pub fn compute_hash(&self) -> String {
        let mut header = self.header.clone();
        header.trace_sha256.clear();
        let mut h = Sha256::new();
        h.update(line(&header).as_bytes());
        h.update(b"\n");
        for r in &self.records {
            h.update(line(r).as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn seal(&mut self) {
        self.header.trace_sha256 = self.compute_hash();
    }

    pub fn hash(&self) -> &str {
        &self.header.trace_sha256
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = line(&self.header);
        out.push('\n');
        for r in &self.records {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    /// Parses a trace; does not verify the digest.
    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| SimError::InvalidTrace("empty trace".into()))?;
        let header: TraceHeader =
            serde_json::from_str(first).map_err(|e| SimError::InvalidTrace(format!("line 1: header: {e}")))?;
        if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
            return Err(SimError::InvalidTrace(format!(
                "line 1: unsupported trace format {} v{}",
                header.format, header.version
            )));
        }
        let records = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| SimError::InvalidTrace(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<Message>, _>>()?;
        Ok(Self { header, records })
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        fs::write(path, self.to_jsonl()).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    /// Agent commands with their record index.
    pub fn commands(&self) -> Vec<(usize, &Message, &AgentCommand)> {
        self.records
            .iter()
            .enumerate()
            .filter_map(|(i, m)| match &m.payload {
                Payload::Command(c) => Some((i, m, c)),
                _ => None,
            })
            .collect()
    }
}
