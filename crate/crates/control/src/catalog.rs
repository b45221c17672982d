use std::collections::BTreeMap;

use gloss_core::pipeline::{AdaptDirection, EventKind, ADAPTER_KIND, EVENT_BUS_KIND};
use gloss_core::transport::{FILE_SINK_KIND, GPS_SOURCE_KIND, LOCATION_XML_CODEC, SMS_DEVICE_KIND, SMS_XML_DEVICE_KIND};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Path,
    UserId,
    Gateway,
    Enum,
    Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSchema {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<&'static str>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<&'static str>,
    pub description: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PortKinds {
    pub plugs: Vec<EventKind>,
    pub sockets: Vec<EventKind>,
}

impl PortKinds {
    fn new(plugs: &[EventKind], sockets: &[EventKind]) -> Self {
        Self { plugs: plugs.to_vec(), sockets: sockets.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub kind: &'static str,
    pub description: &'static str,
    /// Generates events of its own (pumped by the assembly driver).
    pub source: bool,
    pub ports: PortKinds,
    /// Present when the ports depend on a parameter: param -> value -> ports.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub ports_by_param: BTreeMap<&'static str, BTreeMap<&'static str, PortKinds>>,
    pub params: Vec<ParamSchema>,
}

impl CatalogEntry {
    pub fn param(&self, name: &str) -> Option<&ParamSchema> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Ports an instance will have once `params` are applied.
    pub fn ports_for(&self, params: &BTreeMap<String, String>) -> Option<PortKinds> {
        if self.ports_by_param.is_empty() {
            return Some(self.ports.clone());
        }
        self.ports_by_param.iter().find_map(|(name, by_value)| {
            let value = params.get(*name)?.to_ascii_lowercase();
            by_value.get(value.as_str()).cloned()
        })
    }
}

const fn param(
    name: &'static str,
    ty: ParamType,
    required: bool,
    default: Option<&'static str>,
    description: &'static str,
) -> ParamSchema {
    ParamSchema { name, ty, required, default, values: Vec::new(), description }
}

fn device_params() -> Vec<ParamSchema> {
    vec![
        param("own_number", ParamType::UserId, true, None, "number this device sends from and receives on"),
        param("recipient", ParamType::UserId, false, None, "destination for outbound text; omit for receive-only"),
        param("gateway", ParamType::Gateway, false, Some("loopback"), "\"loopback\" or tcp://host:port"),
    ]
}

pub fn catalog() -> Vec<CatalogEntry> {
    use EventKind::{Record, Text};
    let directions: BTreeMap<&'static str, PortKinds> = [AdaptDirection::RecordToText, AdaptDirection::TextToRecord]
        .into_iter()
        .map(|d| (d.as_str(), PortKinds::new(&[d.input()], &[d.output()])))
        .collect();
    vec![
        CatalogEntry {
            kind: EVENT_BUS_KIND,
            description: "record fan-out to every registrant in registration order",
            source: false,
            ports: PortKinds::new(&[Record], &[Record]),
            ports_by_param: BTreeMap::new(),
            params: Vec::new(),
        },
        CatalogEntry {
            kind: GPS_SOURCE_KIND,
            description: "replays a GPS trace as location records",
            source: true,
            ports: PortKinds::new(&[], &[Record]),
            ports_by_param: BTreeMap::new(),
            params: vec![
                param("user", ParamType::UserId, true, None, "user the fixes belong to"),
                param("trace", ParamType::Path, false, None, "trace file, relative to the data dir; give this or fixes"),
                param("fixes", ParamType::Trace, false, None, "inline trace text (JSON lines or NMEA GGA)"),
                param("interval_ms", ParamType::Integer, false, Some("1000"), "time between fixes"),
                ParamSchema {
                    values: vec!["simulated", "live"],
                    ..param("mode", ParamType::Enum, false, Some("simulated"), "simulated time or wall-clock pacing")
                },
            ],
        },
        CatalogEntry {
            kind: SMS_DEVICE_KIND,
            description: "sends text as SMS segments and emits reassembled inbound messages",
            source: true,
            ports: PortKinds::new(&[Text], &[Text]),
            ports_by_param: BTreeMap::new(),
            params: device_params(),
        },
        CatalogEntry {
            kind: SMS_XML_DEVICE_KIND,
            description: "SMS device that only emits inbound messages that parse as location XML",
            source: true,
            ports: PortKinds::new(&[Text], &[Text]),
            ports_by_param: BTreeMap::new(),
            params: device_params(),
        },
        CatalogEntry {
            kind: ADAPTER_KIND,
            description: "converts between records and text with a named codec",
            source: false,
            ports: PortKinds::new(&[Record, Text], &[Record, Text]),
            ports_by_param: BTreeMap::from([("direction", directions)]),
            params: vec![
                ParamSchema {
                    values: vec!["record_to_text", "text_to_record"],
                    ..param("direction", ParamType::Enum, true, None, "which way to convert")
                },
                param("codec", ParamType::String, false, Some(LOCATION_XML_CODEC), "registered codec name"),
            ],
        },
        CatalogEntry {
            kind: FILE_SINK_KIND,
            description: "writes each text event to a date-stamped file",
            source: false,
            ports: PortKinds::new(&[Text], &[]),
            ports_by_param: BTreeMap::new(),
            params: vec![param("directory", ParamType::Path, true, None, "target directory, relative to the data dir")],
        },
    ]
}

pub fn entry(kind: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.kind == kind)
}
