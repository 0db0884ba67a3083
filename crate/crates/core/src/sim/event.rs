//! Simulated clock and event queue.
//!
//! Events are processed in nondecreasing time. Ties are broken by event kind
//! (declaration order of [`EventKind`]), then node, then round, then
//! insertion order, which makes the processing order a total order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::types::{NodeId, Round};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TrainDone,
    RootSubmitted,
    AuditRequest,
    AuditResponse,
    UpdateSent,
    AggregateDone,
    ConsensusDone,
    ModelDownloaded,
    ReliableSetPublished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time_ms: f64,
    pub kind: EventKind,
    pub node: NodeId,
    pub round: Round,
}

#[derive(Debug)]
struct Queued {
    ev: SimEvent,
    seq: u64,
}

impl Queued {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.ev
            .time_ms
            .total_cmp(&other.ev.time_ms)
            .then(self.ev.kind.cmp(&other.ev.kind))
            .then(self.ev.node.cmp(&other.ev.node))
            .then(self.ev.round.cmp(&other.ev.round))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    now_ms: f64,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now_ms
    }

    /// Schedule an event. Scheduling in the past is a logic error.
    pub fn schedule(&mut self, time_ms: f64, kind: EventKind, node: NodeId, round: Round) {
        assert!(
            time_ms >= self.now_ms,
            "event {kind:?} scheduled at {time_ms} before now {}",
            self.now_ms
        );
        self.seq += 1;
        self.heap.push(Queued {
            ev: SimEvent {
                time_ms,
                kind,
                node,
                round,
            },
            seq: self.seq,
        });
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let q = self.heap.pop()?;
        self.now_ms = q.ev.time_ms;
        Some(q.ev)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
