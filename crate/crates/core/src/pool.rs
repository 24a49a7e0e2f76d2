//! Shared publish–subscribe log for one run.
//!
//! Publishers append to a single log; ids are assigned under the pool lock so
//! publish order and id order coincide. Subscribers pull: each poll returns
//! the matching messages past the subscription cursor and moves the cursor to
//! the end of the log, matching or not.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Phase, RoleKind};

pub type MessageId = u64;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("message pool is closed")]
    PoolClosed,
    #[error("unknown subscription {0}")]
    UnknownSubscription(usize),
    #[error("transcript io: {0}")]
    Io(#[from] io::Error),
    #[error("transcript line {line}: {source}")]
    Decode { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    RequirementDoc,
    DesignDoc,
    TestPlan,
    CodeBundle,
    TestReport,
    DeploymentNote,
    SprintPlan,
    SprintRetro,
}

/// A message as handed to `publish`, before an id is assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub sender: RoleKind,
    pub phase: Phase,
    pub kind: MessageKind,
    pub content: String,
    #[serde(default)]
    pub artifact_refs: Vec<String>,
    /// Empty means broadcast.
    #[serde(default)]
    pub send_to: BTreeSet<RoleKind>,
    /// Ids of earlier messages this one answers (e.g. the plan a report executes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<MessageId>,
    /// Role that owns the artifact handoff this message carries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handoff_owner: Option<RoleKind>,
    /// Rendered prompt that produced the content, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl Draft {
    pub fn new(sender: RoleKind, phase: Phase, kind: MessageKind, content: impl Into<String>) -> Self {
        Draft {
            sender,
            phase,
            kind,
            content: content.into(),
            artifact_refs: Vec::new(),
            send_to: BTreeSet::new(),
            references: Vec::new(),
            handoff_owner: None,
            prompt: None,
        }
    }

    pub fn to(mut self, roles: impl IntoIterator<Item = RoleKind>) -> Self {
        self.send_to.extend(roles);
        self
    }

    pub fn with_refs(mut self, paths: Vec<String>) -> Self {
        self.artifact_refs = paths;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    #[serde(flatten)]
    pub body: Draft,
}

impl std::ops::Deref for Message {
    type Target = Draft;

    fn deref(&self) -> &Draft {
        &self.body
    }
}

/// Which messages a subscriber wants. Empty sets match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Filter {
    pub kinds: BTreeSet<MessageKind>,
    pub senders: BTreeSet<RoleKind>,
}

impl Filter {
    pub fn all() -> Self {
        Filter::default()
    }

    pub fn kinds(kinds: impl IntoIterator<Item = MessageKind>) -> Self {
        Filter { kinds: kinds.into_iter().collect(), senders: BTreeSet::new() }
    }

    pub fn matches(&self, subscriber: RoleKind, msg: &Message) -> bool {
        (self.kinds.is_empty() || self.kinds.contains(&msg.kind))
            && (self.senders.is_empty() || self.senders.contains(&msg.sender))
            && (msg.send_to.is_empty() || msg.send_to.contains(&subscriber))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubscriptionId(usize);

#[derive(Debug, Clone)]
pub struct Subscription {
    pub subscriber: RoleKind,
    pub filter: Filter,
    cursor: MessageId,
}

impl Subscription {
    pub fn cursor(&self) -> MessageId {
        self.cursor
    }
}

#[derive(Debug, Default)]
struct Inner {
    log: Vec<Message>,
    subs: Vec<Subscription>,
    closed: bool,
}

#[derive(Debug, Default)]
pub struct MessagePool {
    inner: Mutex<Inner>,
}

impl MessagePool {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // A panic while holding the lock cannot leave the log half-written:
        // every mutation is a single push or field store.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn publish(&self, draft: Draft) -> Result<Message, PoolError> {
        let mut inner = self.lock();
        if inner.closed {
            return Err(PoolError::PoolClosed);
        }
        let msg = Message { id: inner.log.len() as MessageId + 1, body: draft };
        inner.log.push(msg.clone());
        Ok(msg)
    }

    /// Registers a subscription whose cursor starts before the first message.
    pub fn subscribe(&self, subscriber: RoleKind, filter: Filter) -> SubscriptionId {
        let mut inner = self.lock();
        inner.subs.push(Subscription { subscriber, filter, cursor: 0 });
        SubscriptionId(inner.subs.len() - 1)
    }

    pub fn poll(&self, sub: SubscriptionId) -> Result<Vec<Message>, PoolError> {
        let mut inner = self.lock();
        let Inner { log, subs, .. } = &mut *inner;
        let s = subs.get_mut(sub.0).ok_or(PoolError::UnknownSubscription(sub.0))?;
        let start = s.cursor as usize;
        let out = log[start..]
            .iter()
            .filter(|m| s.filter.matches(s.subscriber, m))
            .cloned()
            .collect();
        s.cursor = log.len() as MessageId;
        Ok(out)
    }

    pub fn subscription(&self, sub: SubscriptionId) -> Option<Subscription> {
        self.lock().subs.get(sub.0).cloned()
    }

    pub fn get(&self, id: MessageId) -> Option<Message> {
        let inner = self.lock();
        id.checked_sub(1).and_then(|i| inner.log.get(i as usize).cloned())
    }

    pub fn transcript(&self) -> Vec<Message> {
        self.lock().log.clone()
    }

    pub fn len(&self) -> usize {
        self.lock().log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Marks the run as finished; later publishes fail.
    pub fn close(&self) {
        self.lock().closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Writes the log as JSON Lines, one message per line.
    pub fn write_transcript(&self, mut out: impl Write) -> Result<(), PoolError> {
        for msg in self.transcript() {
            serde_json::to_writer(&mut out, &msg).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_transcript(&self, path: &Path) -> Result<(), PoolError> {
        let file = std::fs::File::create(path)?;
        self.write_transcript(io::BufWriter::new(file))
    }
}

pub fn read_transcript(input: impl BufRead) -> Result<Vec<Message>, PoolError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg = serde_json::from_str(&line).map_err(|source| PoolError::Decode { line: i + 1, source })?;
        out.push(msg);
    }
    Ok(out)
}

pub fn load_transcript(path: &Path) -> Result<Vec<Message>, PoolError> {
    read_transcript(io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Stage;

    fn draft(kind: MessageKind) -> Draft {
        Draft::new(RoleKind::ProjectManager, Phase::new(Stage::Requirements), kind, "x")
    }

    #[test]
    fn ids_start_at_one_and_increase() {
        let pool = MessagePool::new();
        assert_eq!(pool.publish(draft(MessageKind::RequirementDoc)).unwrap().id, 1);
        assert_eq!(pool.publish(draft(MessageKind::DesignDoc)).unwrap().id, 2);
    }

    #[test]
    fn publish_after_close_fails() {
        let pool = MessagePool::new();
        pool.close();
        assert!(matches!(pool.publish(draft(MessageKind::CodeBundle)), Err(PoolError::PoolClosed)));
    }

    #[test]
    fn poll_filters_and_advances_cursor() {
        let pool = MessagePool::new();
        let sub = pool.subscribe(RoleKind::Developer, Filter::kinds([MessageKind::DesignDoc]));
        assert!(pool.poll(sub).unwrap().is_empty());
        pool.publish(draft(MessageKind::RequirementDoc)).unwrap();
        pool.publish(draft(MessageKind::DesignDoc)).unwrap();
        let got = pool.poll(sub).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].kind, MessageKind::DesignDoc);
        assert_eq!(got[0].id, 2);
        assert_eq!(pool.subscription(sub).unwrap().cursor(), 2);
        assert!(pool.poll(sub).unwrap().is_empty());
    }

    #[test]
    fn routing_tags_limit_delivery() {
        let pool = MessagePool::new();
        let dev = pool.subscribe(RoleKind::Developer, Filter::all());
        let tester = pool.subscribe(RoleKind::Tester, Filter::all());
        pool.publish(draft(MessageKind::DesignDoc).to([RoleKind::Developer])).unwrap();
        assert_eq!(pool.poll(dev).unwrap().len(), 1);
        assert!(pool.poll(tester).unwrap().is_empty());
        assert_eq!(pool.subscription(tester).unwrap().cursor(), 1);
    }

    #[test]
    fn unknown_subscription() {
        let pool = MessagePool::new();
        let other = MessagePool::new();
        let sub = other.subscribe(RoleKind::Tester, Filter::all());
        assert!(matches!(pool.poll(sub), Err(PoolError::UnknownSubscription(0))));
    }

    #[test]
    fn transcript_jsonl_round_trip() {
        let pool = MessagePool::new();
        assert!(pool.transcript().is_empty());
        for k in [MessageKind::RequirementDoc, MessageKind::DesignDoc, MessageKind::CodeBundle] {
            pool.publish(draft(k)).unwrap();
        }
        let mut buf = Vec::new();
        pool.write_transcript(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 3);
        let back = read_transcript(&buf[..]).unwrap();
        assert_eq!(back, pool.transcript());
    }
}
