use std::fmt;

use serde::{Deserialize, Serialize};

use super::event::{Event, EventKind};

/// Which side of a connection a port sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    /// Receives events from upstream.
    Plug,
    /// Accepts registrations from downstream plugs.
    Socket,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Port {
    pub component: String,
    pub direction: Direction,
    pub kind: EventKind,
}

impl Port {
    pub fn plug(component: impl Into<String>, kind: EventKind) -> Self {
        Self { component: component.into(), direction: Direction::Plug, kind }
    }

    pub fn socket(component: impl Into<String>, kind: EventKind) -> Self {
        Self { component: component.into(), direction: Direction::Socket, kind }
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = match self.direction {
            Direction::Plug => "plug",
            Direction::Socket => "socket",
        };
        write!(f, "{}.{}[{}]", self.component, dir, self.kind)
    }
}

/// A set of event kinds; a component has at most one port per kind and direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct KindSet {
    text: bool,
    record: bool,
}

impl KindSet {
    pub const NONE: KindSet = KindSet { text: false, record: false };
    pub const TEXT: KindSet = KindSet { text: true, record: false };
    pub const RECORD: KindSet = KindSet { text: false, record: true };
    pub const BOTH: KindSet = KindSet { text: true, record: true };

    pub fn of(kind: EventKind) -> Self {
        match kind {
            EventKind::Text => Self::TEXT,
            EventKind::Record => Self::RECORD,
        }
    }

    pub fn contains(&self, kind: EventKind) -> bool {
        match kind {
            EventKind::Text => self.text,
            EventKind::Record => self.record,
        }
    }

    pub fn intersect(&self, other: &KindSet) -> KindSet {
        KindSet { text: self.text && other.text, record: self.record && other.record }
    }

    pub fn iter(&self) -> impl Iterator<Item = EventKind> + '_ {
        [EventKind::Text, EventKind::Record].into_iter().filter(|k| self.contains(*k))
    }

    pub fn len(&self) -> usize {
        self.text as usize + self.record as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Port shape of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ports {
    pub plugs: KindSet,
    pub sockets: KindSet,
}

impl Ports {
    pub fn new(plugs: KindSet, sockets: KindSet) -> Self {
        Self { plugs, sockets }
    }

    pub fn source(kind: EventKind) -> Self {
        Self::new(KindSet::NONE, KindSet::of(kind))
    }

    pub fn sink(kind: EventKind) -> Self {
        Self::new(KindSet::of(kind), KindSet::NONE)
    }

    pub fn filter(input: EventKind, output: EventKind) -> Self {
        Self::new(KindSet::of(input), KindSet::of(output))
    }
}

/// Failure raised by a component while handling an event or pumping.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ComponentError(pub String);

impl ComponentError {
    pub fn new(msg: impl fmt::Display) -> Self {
        Self(msg.to_string())
    }
}

/// Collects what a component emits during one call.
#[derive(Debug, Default)]
pub struct Outbox {
    pub(crate) events: Vec<Event>,
    pub(crate) warnings: Vec<String>,
}

impl Outbox {
    pub fn emit(&mut self, event: Event) {
        self.events.push(event);
    }

    /// Records a non-fatal diagnostic against the emitting component.
    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Result of pumping a source component once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    /// Nothing to do right now; more may arrive later.
    Idle,
    /// More output is scheduled (e.g. waiting for the next tick).
    Pending,
    /// The source is exhausted.
    Finished,
}

/// A pipeline component.
///
/// Components are driven by their assembly on a single flow of control:
/// `put` for events arriving on a plug, `pump` for sources that generate
/// events of their own (timers, inbound transports).
pub trait Component: Send {
    fn catalog_kind(&self) -> &str;

    fn ports(&self) -> Ports;

    fn put(&mut self, event: &Event, out: &mut Outbox) -> Result<(), ComponentError> {
        let _ = (event, out);
        Ok(())
    }

    fn is_source(&self) -> bool {
        false
    }

    fn pump(&mut self, out: &mut Outbox) -> Result<Activity, ComponentError> {
        let _ = out;
        Ok(Activity::Finished)
    }

    fn start(&mut self) -> Result<(), ComponentError> {
        Ok(())
    }

    fn stop(&mut self) {}
}
