//! Wire frames. Every WebSocket text message carries exactly one [`Frame`]
//! encoded as JSON: `{"v": 1, "kind": ..., "topic": ..., "payload": ...}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use rave_core::events::{Message, SessionControl};

pub const FRAME_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    /// Server to client, once per connection.
    Hello,
    /// Server to client, one per forwarded bus message.
    Event,
    /// Client to server: an operator-observed baby behavior.
    Behavior,
    /// Client to server: a session-control message.
    Control,
    /// Server to client: an inbound frame was accepted.
    Ack,
    /// Server to client: an inbound frame was rejected.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub v: u32,
    pub kind: FrameKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub schema: u32,
    pub topics: Vec<String>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorPayload {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

impl Frame {
    pub fn new(kind: FrameKind, topic: Option<String>, payload: Value) -> Self {
        Self { v: FRAME_VERSION, kind, topic, payload }
    }

    pub fn hello(topics: &[&str], labels: Vec<String>) -> Self {
        let p = HelloPayload { schema: FRAME_VERSION, topics: topics.iter().map(|t| t.to_string()).collect(), labels };
        Self::new(FrameKind::Hello, None, serde_json::to_value(p).expect("hello serializes"))
    }

    /// Wraps a bus message; the payload keeps `seq`, `timestamp`, `source` and the body.
    pub fn event(msg: &Message) -> Self {
        let payload = serde_json::json!({
            "seq": msg.seq,
            "timestamp": msg.timestamp,
            "source": msg.source,
            "body": msg.payload,
        });
        Self::new(FrameKind::Event, Some(msg.topic.as_str().to_string()), payload)
    }

    pub fn behavior(label: &str) -> Self {
        Self::new(FrameKind::Behavior, None, serde_json::json!({ "label": label }))
    }

    pub fn control(control: SessionControl) -> Self {
        Self::new(FrameKind::Control, None, serde_json::to_value(control).expect("control serializes"))
    }

    pub fn ack(of: FrameKind, payload: Value) -> Self {
        Self::new(FrameKind::Ack, None, serde_json::json!({ "of": of, "payload": payload }))
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        let p = ErrorPayload { code: code.to_string(), message: message.into() };
        Self::new(FrameKind::Error, None, serde_json::to_value(p).expect("error serializes"))
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }
}
