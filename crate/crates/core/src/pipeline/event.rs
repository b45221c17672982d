use std::any::Any;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// The two event kinds a port can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventKind {
    Text,
    Record,
}

impl EventKind {
    pub fn other(self) -> Self {
        match self {
            EventKind::Text => EventKind::Record,
            EventKind::Record => EventKind::Text,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Text => "TEXT",
            EventKind::Record => "RECORD",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Structured payloads carried by record events.
pub trait Payload: Any + Send + Sync + fmt::Debug {}

impl<T: Any + Send + Sync + fmt::Debug> Payload for T {}

/// A unit flowing through a pipeline. Cloning shares the payload.
#[derive(Clone)]
pub enum Event {
    Text(Arc<str>),
    Record(Arc<dyn Payload>),
}

impl Event {
    pub fn text(s: impl Into<Arc<str>>) -> Self {
        Event::Text(s.into())
    }

    pub fn record<T: Payload>(payload: T) -> Self {
        Event::Record(Arc::new(payload))
    }

    pub fn kind(&self) -> EventKind {
        match self {
            Event::Text(_) => EventKind::Text,
            Event::Record(_) => EventKind::Record,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Event::Text(s) => Some(s),
            Event::Record(_) => None,
        }
    }

    pub fn payload(&self) -> Option<&dyn Payload> {
        match self {
            Event::Record(p) => Some(p.as_ref()),
            Event::Text(_) => None,
        }
    }

    pub fn downcast<T: Any>(&self) -> Option<&T> {
        let payload: &dyn Any = self.payload()?;
        payload.downcast_ref::<T>()
    }

    /// True when both events share the same underlying allocation.
    pub fn same_instance(&self, other: &Event) -> bool {
        match (self, other) {
            (Event::Text(a), Event::Text(b)) => Arc::ptr_eq(a, b),
            (Event::Record(a), Event::Record(b)) => {
                std::ptr::addr_eq(Arc::as_ptr(a), Arc::as_ptr(b))
            }
            _ => false,
        }
    }

    /// Human-readable rendering truncated to `max_chars` characters.
    pub fn preview(&self, max_chars: usize) -> String {
        let full = match self {
            Event::Text(s) => s.to_string(),
            Event::Record(p) => format!("{p:?}"),
        };
        full.chars().take(max_chars).collect()
    }
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Text(s) => f.debug_tuple("Text").field(s).finish(),
            Event::Record(p) => f.debug_tuple("Record").field(p).finish(),
        }
    }
}
