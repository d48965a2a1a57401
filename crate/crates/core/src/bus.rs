//! In-process publish/subscribe bus over a closed registry of named topics.
//!
//! Every message gets a per-topic sequence number and the session-clock
//! timestamp at the moment of publication. Publication is atomic with respect
//! to all subscriptions, so every subscriber observes the same global order
//! (bus publish order, which is non-decreasing in timestamp).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard, Weak};
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("topic `{0}` is not registered")]
    UnregisteredTopic(String),
    #[error("session clock has not been started")]
    SessionNotStarted,
    #[error("malformed topic pattern `{0}`")]
    MalformedPattern(String),
    #[error("subscription is closed")]
    SubscriptionClosed,
    #[error("session clock cannot move backwards from {now} ms to {requested} ms")]
    ClockRegression { now: u64, requested: u64 },
}

/// The fixed set of topic names understood by the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topic {
    #[serde(rename = "perception.aoi")]
    PerceptionAoi,
    #[serde(rename = "perception.thermal")]
    PerceptionThermal,
    #[serde(rename = "perception.behavior")]
    PerceptionBehavior,
    #[serde(rename = "agent.avatar.lifecycle")]
    AvatarLifecycle,
    #[serde(rename = "agent.robot.lifecycle")]
    RobotLifecycle,
    #[serde(rename = "dm.command.avatar")]
    AvatarCommand,
    #[serde(rename = "dm.command.robot")]
    RobotCommand,
    #[serde(rename = "dm.state")]
    DmState,
    #[serde(rename = "dm.timer")]
    DmTimer,
    #[serde(rename = "session.control")]
    SessionControl,
}

impl Topic {
    pub const ALL: [Topic; 10] = [
        Topic::PerceptionAoi,
        Topic::PerceptionThermal,
        Topic::PerceptionBehavior,
        Topic::AvatarLifecycle,
        Topic::RobotLifecycle,
        Topic::AvatarCommand,
        Topic::RobotCommand,
        Topic::DmState,
        Topic::DmTimer,
        Topic::SessionControl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::PerceptionAoi => "perception.aoi",
            Topic::PerceptionThermal => "perception.thermal",
            Topic::PerceptionBehavior => "perception.behavior",
            Topic::AvatarLifecycle => "agent.avatar.lifecycle",
            Topic::RobotLifecycle => "agent.robot.lifecycle",
            Topic::AvatarCommand => "dm.command.avatar",
            Topic::RobotCommand => "dm.command.robot",
            Topic::DmState => "dm.state",
            Topic::DmTimer => "dm.timer",
            Topic::SessionControl => "session.control",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = BusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| BusError::UnregisteredTopic(s.to_string()))
    }
}

impl AsRef<str> for Topic {
    fn as_ref(&self) -> &str {
        self.as_str()
    }
}

/// Closed set of topics a bus accepts. Fixed when the bus is created.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicRegistry {
    topics: BTreeSet<Topic>,
}

impl TopicRegistry {
    pub fn new(topics: impl IntoIterator<Item = Topic>) -> Self {
        Self { topics: topics.into_iter().collect() }
    }

    pub fn resolve(&self, name: &str) -> Result<Topic, BusError> {
        let topic = Topic::from_str(name)?;
        if self.topics.contains(&topic) {
            Ok(topic)
        } else {
            Err(BusError::UnregisteredTopic(name.to_string()))
        }
    }

    pub fn contains(&self, topic: Topic) -> bool {
        self.topics.contains(&topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = Topic> + '_ {
        self.topics.iter().copied()
    }
}

impl Default for TopicRegistry {
    fn default() -> Self {
        Self::new(Topic::ALL)
    }
}

/// Subscription pattern: an exact topic, a prefix wildcard (`perception.*`,
/// matching any deeper topic), or `*` for everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopicPattern {
    Exact(String),
    Prefix(String),
    All,
}

fn valid_segment(seg: &str) -> bool {
    !seg.is_empty()
        && seg
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

impl TopicPattern {
    pub fn parse(pattern: &str) -> Result<Self, BusError> {
        let malformed = || BusError::MalformedPattern(pattern.to_string());
        if pattern == "*" {
            return Ok(TopicPattern::All);
        }
        let (body, prefix) = match pattern.strip_suffix(".*") {
            Some(body) => (body, true),
            None => (pattern, false),
        };
        if !body.split('.').all(valid_segment) {
            return Err(malformed());
        }
        Ok(if prefix {
            TopicPattern::Prefix(body.to_string())
        } else {
            TopicPattern::Exact(body.to_string())
        })
    }

    pub fn matches(&self, topic: &str) -> bool {
        match self {
            TopicPattern::All => true,
            TopicPattern::Exact(t) => t == topic,
            TopicPattern::Prefix(p) => {
                topic.len() > p.len() + 1 && topic.starts_with(p.as_str()) && topic.as_bytes()[p.len()] == b'.'
            }
        }
    }
}

/// One delivered message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusMessage<P> {
    pub topic: Topic,
    pub seq: u64,
    pub timestamp: u64,
    pub source: String,
    pub payload: P,
}

struct Slot<P> {
    id: u64,
    pattern: TopicPattern,
    tx: Sender<BusMessage<P>>,
}

struct Inner<P> {
    started: bool,
    now: u64,
    seqs: BTreeMap<Topic, u64>,
    subs: Vec<Slot<P>>,
    next_sub: u64,
}

/// Cloneable handle to a shared bus.
pub struct Bus<P> {
    registry: Arc<TopicRegistry>,
    inner: Arc<Mutex<Inner<P>>>,
}

impl<P> Clone for Bus<P> {
    fn clone(&self) -> Self {
        Self { registry: Arc::clone(&self.registry), inner: Arc::clone(&self.inner) }
    }
}

fn lock<P>(m: &Mutex<Inner<P>>) -> MutexGuard<'_, Inner<P>> {
    // Critical sections never leave partial state, so poisoning is ignored.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl<P: Clone> Bus<P> {
    pub fn new(registry: TopicRegistry) -> Self {
        Self {
            registry: Arc::new(registry),
            inner: Arc::new(Mutex::new(Inner {
                started: false,
                now: 0,
                seqs: BTreeMap::new(),
                subs: Vec::new(),
                next_sub: 0,
            })),
        }
    }

    pub fn registry(&self) -> &TopicRegistry {
        &self.registry
    }

    /// Starts the session clock at `t0` ms.
    pub fn start(&self, t0: u64) {
        let mut inner = lock(&self.inner);
        inner.started = true;
        inner.now = t0;
    }

    pub fn is_started(&self) -> bool {
        lock(&self.inner).started
    }

    pub fn now(&self) -> u64 {
        lock(&self.inner).now
    }

    /// Moves the session clock forward. The clock never moves backwards.
    pub fn advance_to(&self, t: u64) -> Result<(), BusError> {
        let mut inner = lock(&self.inner);
        if !inner.started {
            return Err(BusError::SessionNotStarted);
        }
        if t < inner.now {
            return Err(BusError::ClockRegression { now: inner.now, requested: t });
        }
        inner.now = t;
        Ok(())
    }

    /// Publishes on a topic given by name. Returns the assigned sequence number.
    pub fn publish(&self, topic: &str, payload: P, source: &str) -> Result<u64, BusError> {
        let topic = self.registry.resolve(topic)?;
        self.publish_to(topic, payload, source)
    }

    pub fn publish_to(&self, topic: Topic, payload: P, source: &str) -> Result<u64, BusError> {
        if !self.registry.contains(topic) {
            return Err(BusError::UnregisteredTopic(topic.as_str().to_string()));
        }
        let mut inner = lock(&self.inner);
        if !inner.started {
            return Err(BusError::SessionNotStarted);
        }
        let seq = {
            let s = inner.seqs.entry(topic).or_insert(0);
            *s += 1;
            *s
        };
        let msg = BusMessage {
            topic,
            seq,
            timestamp: inner.now,
            source: source.to_string(),
            payload,
        };
        // Receivers that were dropped without close() are pruned here.
        inner.subs.retain(|slot| {
            if slot.pattern.matches(topic.as_str()) {
                slot.tx.send(msg.clone()).is_ok()
            } else {
                true
            }
        });
        Ok(seq)
    }

    pub fn subscribe(&self, pattern: &str) -> Result<Subscription<P>, BusError> {
        let pattern = TopicPattern::parse(pattern)?;
        let (tx, rx) = crossbeam_channel::unbounded();
        let mut inner = lock(&self.inner);
        let id = inner.next_sub;
        inner.next_sub += 1;
        inner.subs.push(Slot { id, pattern, tx });
        Ok(Subscription { id, rx, bus: Arc::downgrade(&self.inner), closed: false })
    }

    pub fn subscriber_count(&self) -> usize {
        lock(&self.inner).subs.len()
    }
}

/// Ordered stream of messages matching one pattern. Consumed by exactly one owner.
pub struct Subscription<P> {
    id: u64,
    rx: Receiver<BusMessage<P>>,
    bus: Weak<Mutex<Inner<P>>>,
    closed: bool,
}

impl<P> Subscription<P> {
    /// Returns and removes every queued message, in delivery order.
    pub fn drain(&mut self) -> Result<Vec<BusMessage<P>>, BusError> {
        if self.closed {
            return Err(BusError::SubscriptionClosed);
        }
        Ok(self.rx.try_iter().collect())
    }

    /// Blocks up to `timeout` for the next message.
    pub fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<BusMessage<P>>, BusError> {
        if self.closed {
            return Err(BusError::SubscriptionClosed);
        }
        match self.rx.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(BusError::SubscriptionClosed),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        if let Some(inner) = self.bus.upgrade() {
            lock(&inner).subs.retain(|s| s.id != self.id);
        }
    }
}

impl<P> Drop for Subscription<P> {
    fn drop(&mut self) {
        self.close();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn bus() -> Bus<u32> {
        let b = Bus::new(TopicRegistry::default());
        b.start(0);
        b
    }

    #[test]
    fn seq_is_monotone_per_topic() {
        let b = bus();
        for i in 1..=6 {
            assert_eq!(b.publish("perception.aoi", i, "gaze").unwrap(), i as u64);
        }
        assert_eq!(b.publish("perception.aoi", 7, "gaze").unwrap(), 7);
        assert_eq!(b.publish("perception.thermal", 0, "thermal").unwrap(), 1);
    }

    #[test]
    fn unregistered_topic_is_rejected() {
        let b = bus();
        assert_eq!(
            b.publish("bogus.topic", 1, "x"),
            Err(BusError::UnregisteredTopic("bogus.topic".into()))
        );
        let narrow: Bus<u32> = Bus::new(TopicRegistry::new([Topic::DmState]));
        narrow.start(0);
        assert!(matches!(narrow.publish("perception.aoi", 1, "x"), Err(BusError::UnregisteredTopic(_))));
    }

    #[test]
    fn publish_requires_started_clock() {
        let b: Bus<u32> = Bus::new(TopicRegistry::default());
        assert_eq!(b.publish("dm.state", 1, "dm"), Err(BusError::SessionNotStarted));
    }

    #[test]
    fn fifo_and_prefix_delivery() {
        let b = bus();
        let mut sub = b.subscribe("perception.*").unwrap();
        assert!(sub.drain().unwrap().is_empty());
        b.publish("perception.aoi", 1, "gaze").unwrap();
        b.publish("perception.thermal", 2, "thermal").unwrap();
        b.publish("perception.aoi", 3, "gaze").unwrap();
        b.publish("dm.state", 4, "dm").unwrap();
        let got: Vec<u32> = sub.drain().unwrap().into_iter().map(|m| m.payload).collect();
        assert_eq!(got, vec![1, 2, 3]);
        assert!(sub.drain().unwrap().is_empty());
    }

    #[test]
    fn no_retro_delivery() {
        let b = bus();
        b.publish("dm.state", 1, "dm").unwrap();
        let mut sub = b.subscribe("dm.state").unwrap();
        assert!(sub.drain().unwrap().is_empty());
        b.publish("dm.state", 2, "dm").unwrap();
        assert_eq!(sub.drain().unwrap().len(), 1);
    }

    #[test]
    fn pattern_grammar() {
        assert!(matches!(TopicPattern::parse("perception.**.*"), Err(BusError::MalformedPattern(_))));
        assert!(TopicPattern::parse("").is_err());
        assert!(TopicPattern::parse("a..b").is_err());
        assert!(TopicPattern::parse(".*").is_err());
        assert_eq!(TopicPattern::parse("*").unwrap(), TopicPattern::All);
        let p = TopicPattern::parse("agent.*").unwrap();
        assert!(p.matches("agent.robot.lifecycle"));
        assert!(!p.matches("agents.robot"));
        assert!(!p.matches("agent"));
    }

    #[test]
    fn closed_subscription_errors() {
        let b = bus();
        let mut sub = b.subscribe("dm.state").unwrap();
        assert_eq!(b.subscriber_count(), 1);
        sub.close();
        assert_eq!(sub.drain(), Err(BusError::SubscriptionClosed));
        assert_eq!(b.subscriber_count(), 0);
    }

    #[test]
    fn source_is_carried() {
        let b = bus();
        let mut sub = b.subscribe("perception.behavior").unwrap();
        b.publish("perception.behavior", 9, "scripted").unwrap();
        b.publish("perception.behavior", 9, "operator").unwrap();
        let msgs = sub.drain().unwrap();
        assert_eq!(msgs[0].payload, msgs[1].payload);
        assert_ne!(msgs[0].source, msgs[1].source);
    }

    #[test]
    fn clock_is_monotone_and_stamps_messages() {
        let b = bus();
        let mut sub = b.subscribe("*").unwrap();
        b.advance_to(250).unwrap();
        b.publish("dm.timer", 1, "dm").unwrap();
        assert!(matches!(b.advance_to(100), Err(BusError::ClockRegression { .. })));
        assert_eq!(sub.drain().unwrap()[0].timestamp, 250);
    }

    #[test]
    fn concurrent_producers_lose_nothing() {
        let b = bus();
        let mut sub = b.subscribe("*").unwrap();
        let topics = [Topic::PerceptionAoi, Topic::PerceptionThermal, Topic::PerceptionBehavior, Topic::DmState];
        let handles: Vec<_> = topics
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let b = b.clone();
                thread::spawn(move || {
                    for k in 0..500u32 {
                        b.publish_to(t, i as u32 * 1000 + k, "p").unwrap();
                    }
                })
            })
            .collect();
        let mut received = Vec::new();
        for h in handles {
            h.join().unwrap();
        }
        received.extend(sub.drain().unwrap());
        assert_eq!(received.len(), 2000);
        let mut last: BTreeMap<Topic, u64> = BTreeMap::new();
        for m in &received {
            let prev = last.insert(m.topic, m.seq).unwrap_or(0);
            assert_eq!(m.seq, prev + 1, "gap or reorder on {}", m.topic);
        }
    }
}
