use std::collections::HashSet;
use std::path::Path;

use gloss_core::LatLongCoordinate;
use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Mobile,
    Server,
    Hub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TransportKind {
    Ip,
    Sms,
    Bluetooth,
    Proximity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Latency {
    Fixed(f64),
    Uniform([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proc_delay_ms: Option<u64>,
}

impl NodeSpec {
    pub fn position(&self) -> Option<LatLongCoordinate> {
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => LatLongCoordinate::new(lat, lon).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub kind: TransportKind,
    pub latency: Latency,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_payload: Option<u64>,
}

/// Nodes and bidirectional links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::ValidationFailure(msg.into())
}

impl TopologySpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return Err(invalid("empty node id"));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(invalid(format!("duplicate node id '{}'", n.id)));
            }
            match (n.lat, n.lon) {
                (None, None) => {}
                (Some(lat), Some(lon)) => {
                    LatLongCoordinate::new(lat, lon).map_err(|e| invalid(format!("node '{}': {e}", n.id)))?;
                }
                _ => return Err(invalid(format!("node '{}': lat and lon must be given together", n.id))),
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            let at = |m: String| invalid(format!("link {i} ({}-{}): {m}", l.a, l.b));
            for end in [&l.a, &l.b] {
                if !ids.contains(end.as_str()) {
                    return Err(at(format!("unknown node '{end}'")));
                }
            }
            if l.a == l.b {
                return Err(at("self-link".into()));
            }
            if !(l.loss.is_finite() && (0.0..=1.0).contains(&l.loss)) {
                return Err(at(format!("loss {} outside [0, 1]", l.loss)));
            }
            match l.latency {
                Latency::Fixed(f) if !(f.is_finite() && f >= 0.0) => {
                    return Err(at(format!("latency {f} must be finite and >= 0")))
                }
                Latency::Uniform([lo, hi]) if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) => {
                    return Err(at(format!("uniform latency needs 0 <= lo <= hi, got [{lo}, {hi}]")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }
}

pub fn parse_topology(text: &str) -> Result<TopologySpec, SimError> {
    let spec: TopologySpec = serde_json::from_str(text).map_err(|e| SimError::ParseFailure(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_topology(path: &Path) -> Result<TopologySpec, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_topology(&text)
}

pub const BROADCAST: &str = "BROADCAST";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimMessage {
    pub msg_id: String,
    pub origin: String,
    /// A node id or [`BROADCAST`].
    pub destination: String,
    #[serde(rename = "type")]
    pub msg_type: String,
    pub size: u64,
    pub inject_ms: u64,
}

impl SimMessage {
    pub fn is_broadcast(&self) -> bool {
        self.destination == BROADCAST
    }
}

pub fn validate_workload(spec: &TopologySpec, workload: &[SimMessage]) -> Result<(), SimError> {
    let mut ids = HashSet::new();
    for m in workload {
        if !ids.insert(m.msg_id.as_str()) {
            return Err(invalid(format!("duplicate msg_id '{}'", m.msg_id)));
        }
        if spec.node_index(&m.origin).is_none() {
            return Err(invalid(format!("message '{}': unknown origin '{}'", m.msg_id, m.origin)));
        }
        if !m.is_broadcast() && spec.node_index(&m.destination).is_none() {
            return Err(invalid(format!("message '{}': unknown destination '{}'", m.msg_id, m.destination)));
        }
    }
    Ok(())
}

pub fn parse_workload(text: &str) -> Result<Vec<SimMessage>, SimError> {
    serde_json::from_str(text).map_err(|e| SimError::ParseFailure(e.to_string()))
}

pub fn load_workload(path: &Path) -> Result<Vec<SimMessage>, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_workload(&text)
}
