//! Append-only simulation event log (`events.jsonl`).
//!
//! Events are totally ordered by `(iteration, phase, agent, seq)`; `seq` is
//! the zero-based position in the log. Field meaning by kind:
//!
//! | kind | target | post | content | feed |
//! |------|--------|------|---------|------|
//! | Publish | - | new post | body | shown feed |
//! | Reshare / Comment | reacted post | new post | body | shown feed |
//! | Like / Dislike | reacted post | - | - | shown feed |
//! | Refrain | - | - | - | shown feed |
//! | Follow | followee agent | - | - | - |
//! | Promotion | post | - | - | - |
//! | Decay | post | - | - | - |
//! | Halt | - | - | - | - |

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{EngagementStats, PostId};
use crate::graph::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Action,
    Follow,
    Memory,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Publish,
    Reshare,
    Like,
    Dislike,
    Comment,
    Refrain,
    Follow,
    Promotion,
    Decay,
    Halt,
}

impl EventKind {
    pub fn phase(self) -> Phase {
        match self {
            EventKind::Publish
            | EventKind::Reshare
            | EventKind::Like
            | EventKind::Dislike
            | EventKind::Comment
            | EventKind::Refrain => Phase::Action,
            EventKind::Follow => Phase::Follow,
            EventKind::Promotion | EventKind::Decay => Phase::Memory,
            EventKind::Halt => Phase::Halt,
        }
    }

    pub fn is_action(self) -> bool {
        self.phase() == Phase::Action
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationEvent {
    pub seq: u64,
    pub iteration: u64,
    pub phase: Phase,
    pub agent: Option<AgentId>,
    pub kind: EventKind,
    pub target: Option<u64>,
    pub post: Option<PostId>,
    pub content: Option<String>,
    pub reason: Option<String>,
    #[serde(default)]
    pub feed: Option<Vec<PostId>>,
    #[serde(default)]
    pub engagement: Option<EngagementStats>,
}

impl SimulationEvent {
    pub fn new(iteration: u64, agent: Option<AgentId>, kind: EventKind) -> Self {
        Self {
            seq: 0,
            iteration,
            phase: kind.phase(),
            agent,
            kind,
            target: None,
            post: None,
            content: None,
            reason: None,
            feed: None,
            engagement: None,
        }
    }

    pub fn sort_key(&self) -> (u64, Phase, Option<AgentId>, u64) {
        (self.iteration, self.phase, self.agent, self.seq)
    }
}

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("events line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Appends events, assigning consecutive sequence numbers.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    events: Vec<SimulationEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mut e: SimulationEvent) {
        e.seq = self.events.len() as u64;
        self.events.push(e);
    }

    pub fn events(&self) -> &[SimulationEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<SimulationEvent> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

pub fn write_jsonl<W: Write>(mut w: W, events: &[SimulationEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl_bytes(events: &[SimulationEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, events).expect("writing to a Vec cannot fail");
    buf
}

/// Parses a log and checks sequence numbering and total order.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<SimulationEvent>, EventLogError> {
    let mut out: Vec<SimulationEvent> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let e: SimulationEvent = serde_json::from_str(&line).map_err(|err| EventLogError::Schema {
            line: n,
            message: err.to_string(),
        })?;
        let schema = |message: String| EventLogError::Schema { line: n, message };
        if e.phase != e.kind.phase() {
            return Err(schema(format!("{:?} event in {:?} phase", e.kind, e.phase)));
        }
        if e.seq != out.len() as u64 {
            return Err(schema(format!("expected seq {}, found {}", out.len(), e.seq)));
        }
        if e.agent.is_none() && e.kind != EventKind::Halt {
            return Err(schema(format!("{:?} event without agent", e.kind)));
        }
        if let Some(prev) = out.last() {
            if prev.kind == EventKind::Halt {
                return Err(schema("event after Halt".into()));
            }
            let (pi, pp, pa, _) = prev.sort_key();
            if (e.iteration, e.phase) < (pi, pp)
                || ((e.iteration, e.phase) == (pi, pp) && e.kind != EventKind::Halt && e.agent < pa)
            {
                return Err(schema("events out of order".into()));
            }
        }
        out.push(e);
    }
    Ok(out)
}
