//! Typed component pipelines.
//!
//! Components expose plugs (receive from upstream) and sockets (accept
//! downstream registrations), each carrying one [`EventKind`]. An
//! [`Assembly`] holds components and the socket→plug connections between
//! them, rejects kind mismatches and cycles at connect time, and delivers
//! events synchronously in registration order.

mod adapter;
mod assembly;
mod bus;
mod component;
mod event;

pub use adapter::{adapt, AdaptDirection, Adapter, Codec, CodecError, CodecRegistry, TextCodec, ADAPTER_KIND, TEXT_CODEC};
pub use assembly::{
    Assembly, AssemblyState, ComponentInfo, Connection, Diagnostic, PumpReport, Tap, TapEvent,
};
pub use bus::{EventBus, EVENT_BUS_KIND};
pub use component::{Activity, Component, ComponentError, Direction, KindSet, Outbox, Port, Ports};
pub use event::{Event, EventKind, Payload};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("kind mismatch: {socket} socket cannot feed {plug} plug")]
    KindMismatch { socket: EventKind, plug: EventKind },
    #[error("connecting {from} -> {to} would form a cycle")]
    CycleWouldForm { from: String, to: String },
    #[error("unknown component '{0}'")]
    UnknownComponent(String),
    #[error("assembly is {0}; only CREATED assemblies can be edited")]
    AssemblyNotEditable(AssemblyState),
    #[error("assembly is {0}, not RUNNING")]
    NotRunning(AssemblyState),
    #[error("cannot {op} an assembly that is {from}")]
    InvalidStateTransition { from: AssemblyState, op: &'static str },
    #[error("unknown codec '{0}'")]
    UnknownCodec(String),
    #[error("codec failure: {0}")]
    CodecFailure(String),
    #[error("duplicate component id '{0}'")]
    DuplicateComponent(String),
    #[error("{from} is already registered with {to}")]
    DuplicateConnection { from: String, to: String },
    #[error("ambiguous ports between {from} and {to}: more than one compatible kind")]
    AmbiguousPorts { from: String, to: String },
    #[error("no such port {0}")]
    PortNotFound(Port),
    #[error("port {0} has the wrong direction for this end of a connection")]
    WrongDirection(Port),
    #[error("'{0}' is not an event bus")]
    NotAnEventBus(String),
    #[error("component {component} failed to start: {reason}")]
    StartFailed { component: String, reason: String },
}

impl PipelineError {
    /// Stable machine-readable name of the error variant.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::KindMismatch { .. } => "KindMismatch",
            PipelineError::CycleWouldForm { .. } => "CycleWouldForm",
            PipelineError::UnknownComponent(_) => "UnknownComponent",
            PipelineError::AssemblyNotEditable(_) => "AssemblyNotEditable",
            PipelineError::NotRunning(_) => "NotRunning",
            PipelineError::InvalidStateTransition { .. } => "InvalidStateTransition",
            PipelineError::UnknownCodec(_) => "UnknownCodec",
            PipelineError::CodecFailure(_) => "CodecFailure",
            PipelineError::DuplicateComponent(_) => "DuplicateComponent",
            PipelineError::DuplicateConnection { .. } => "DuplicateConnection",
            PipelineError::AmbiguousPorts { .. } => "AmbiguousPorts",
            PipelineError::PortNotFound(_) => "PortNotFound",
            PipelineError::WrongDirection(_) => "WrongDirection",
            PipelineError::NotAnEventBus(_) => "NotAnEventBus",
            PipelineError::StartFailed { .. } => "StartFailed",
        }
    }
}

#[cfg(test)]
mod tests;
