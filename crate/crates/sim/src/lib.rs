//! Deterministic discrete-event simulation of a network of assemblies.
//!
//! Time is integer milliseconds and events run in `(time, seq)` order, where
//! `seq` is the scheduling order. Each link draws loss and latency from its
//! own ChaCha8 stream, so adding a link leaves the others' draws unchanged.

mod engine;
mod metrics;
mod topology;

pub use engine::{fnv1a64, link_rng, run, run_traced, RoutingPolicy, SimEventKind, TraceRecord, EVENT_BUDGET};
pub use metrics::{emit_metrics, MetricsFormat, SimMetrics, CSV_SUMMARY_FIELDS};
pub use topology::{
    load_topology, load_workload, parse_topology, parse_workload, validate_workload, Latency, LinkSpec, NodeSpec, Role,
    SimMessage, TopologySpec, TransportKind, BROADCAST,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("parse failure: {0}")]
    ParseFailure(String),
    #[error("validation failure: {0}")]
    ValidationFailure(String),
    #[error("node '{0}' has no position, which geo routing needs")]
    MissingPositions(String),
    #[error("run exceeded {0} events")]
    TooLarge(u64),
    #[error("I/O failure: {0}")]
    Io(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::ParseFailure(_) => "ParseFailure",
            SimError::ValidationFailure(_) => "ValidationFailure",
            SimError::MissingPositions(_) => "MissingPositions",
            SimError::TooLarge(_) => "TooLarge",
            SimError::Io(_) => "IoFailure",
        }
    }
}
