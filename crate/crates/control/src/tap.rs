use std::collections::VecDeque;
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};
use gloss_core::pipeline::{Event, EventKind};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

pub const DEFAULT_TAP_CAPACITY: usize = 256;
pub const PREVIEW_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapRecord {
    /// Position in the assembly's tap sequence, from 0.
    pub seq: u64,
    pub time: String,
    pub component: String,
    pub kind: EventKind,
    pub preview: String,
}

struct Inner {
    ring: VecDeque<TapRecord>,
    next_seq: u64,
    subscribers: Vec<mpsc::UnboundedSender<TapRecord>>,
}

/// Last-N ring of observed events plus live subscribers.
pub struct EventTap {
    capacity: usize,
    inner: Mutex<Inner>,
}

impl EventTap {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            inner: Mutex::new(Inner { ring: VecDeque::new(), next_seq: 0, subscribers: Vec::new() }),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn observe(&self, component: &str, event: &Event) {
        let mut g = self.inner.lock().unwrap();
        let record = TapRecord {
            seq: g.next_seq,
            time: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            component: component.to_string(),
            kind: event.kind(),
            preview: event.preview(PREVIEW_CHARS),
        };
        g.next_seq += 1;
        g.subscribers.retain(|s| s.send(record.clone()).is_ok());
        if g.ring.len() == self.capacity {
            g.ring.pop_front();
        }
        g.ring.push_back(record);
    }

    pub fn snapshot(&self) -> Vec<TapRecord> {
        self.inner.lock().unwrap().ring.iter().cloned().collect()
    }

    /// Total events observed, including those evicted from the ring.
    pub fn observed(&self) -> u64 {
        self.inner.lock().unwrap().next_seq
    }

    pub fn subscribe(&self) -> mpsc::UnboundedReceiver<TapRecord> {
        let (tx, rx) = mpsc::unbounded_channel();
        self.inner.lock().unwrap().subscribers.push(tx);
        rx
    }

    /// Ends every live subscription.
    pub fn close_streams(&self) {
        self.inner.lock().unwrap().subscribers.clear();
    }
}
