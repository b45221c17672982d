use super::component::{Component, ComponentError, Outbox, Ports};
use super::event::{Event, EventKind};

pub const EVENT_BUS_KIND: &str = "event_bus";

/// Record-kinded fan-out: every event put on the bus is re-emitted once to
/// each registrant, in registration order.
#[derive(Debug, Default)]
pub struct EventBus;

impl EventBus {
    pub fn new() -> Self {
        Self
    }
}

impl Component for EventBus {
    fn catalog_kind(&self) -> &str {
        EVENT_BUS_KIND
    }

    fn ports(&self) -> Ports {
        Ports::filter(EventKind::Record, EventKind::Record)
    }

    fn put(&mut self, event: &Event, out: &mut Outbox) -> Result<(), ComponentError> {
        out.emit(event.clone());
        Ok(())
    }
}
