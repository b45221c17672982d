//! Builds assemblies from declarative specs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gloss_core::clock;
use gloss_core::pipeline::{AdaptDirection, Adapter, Assembly, CodecRegistry, Component, EventBus, PipelineError};
use gloss_core::transport::{
    open_gateway, parse_trace, standard_codecs, FileSink, GatewayAddress, GpsMode, GpsSource, LoopbackGateway,
    SmsDevice, UserId, GPS_SOURCE_KIND, SMS_XML_DEVICE_KIND,
};
use serde::{Deserialize, Deserializer, Serialize};

use crate::catalog::{self, CatalogEntry, ParamType};

/// A parameter value; numbers and booleans are accepted and kept as text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ParamValue(pub String);

impl<'de> Deserialize<'de> for ParamValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            I(i64),
            U(u64),
            F(f64),
            B(bool),
        }
        Ok(ParamValue(match Raw::deserialize(d)? {
            Raw::S(s) => s,
            Raw::I(v) => v.to_string(),
            Raw::U(v) => v.to_string(),
            Raw::F(v) => v.to_string(),
            Raw::B(v) => v.to_string(),
        }))
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub id: String,
    pub catalog_kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblySpecDoc {
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub connections: Vec<ConnectionSpec>,
}

impl AssemblySpecDoc {
    pub fn component(mut self, id: &str, kind: &str, params: &[(&str, &str)]) -> Self {
        self.components.push(ComponentSpec {
            id: id.to_string(),
            catalog_kind: kind.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), ParamValue::from(*v))).collect(),
        });
        self
    }

    pub fn connect(mut self, from: &str, to: &str) -> Self {
        self.connections.push(ConnectionSpec { from: from.to_string(), to: to.to_string() });
        self
    }
}

/// Why a spec was rejected. `reason` is a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError {
    pub reason: &'static str,
    pub message: String,
}

impl SpecError {
    fn new(reason: &'static str, message: impl Into<String>) -> Self {
        Self { reason, message: message.into() }
    }
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.message)
    }
}

impl std::error::Error for SpecError {}

impl From<PipelineError> for SpecError {
    fn from(e: PipelineError) -> Self {
        SpecError::new(e.code(), e.to_string())
    }
}

pub struct Factory {
    data_dir: PathBuf,
    loopback: Arc<LoopbackGateway>,
    codecs: CodecRegistry,
}

impl Factory {
    pub fn new(data_dir: impl Into<PathBuf>, loopback: Arc<LoopbackGateway>) -> Self {
        Self { data_dir: data_dir.into(), loopback, codecs: standard_codecs() }
    }

    pub fn loopback(&self) -> &Arc<LoopbackGateway> {
        &self.loopback
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }

    /// Instantiates every component and wires every connection, in spec order.
    pub fn build(&self, id: &str, spec: &AssemblySpecDoc) -> Result<Assembly, SpecError> {
        let mut a = Assembly::new(id);
        let mut seen = HashSet::new();
        for c in &spec.components {
            if c.id.is_empty() {
                return Err(SpecError::new("InvalidParam", "component id must not be empty"));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(PipelineError::DuplicateComponent(c.id.clone()).into());
            }
            let entry = catalog::entry(&c.catalog_kind).ok_or_else(|| {
                SpecError::new("UnknownCatalogKind", format!("no catalog entry '{}'", c.catalog_kind))
            })?;
            let params = check_params(&entry, c)?;
            let component = self.instantiate(&entry, &c.id, &params)?;
            a.add_with_params(c.id.clone(), params, component)?;
        }
        for conn in &spec.connections {
            a.wire(&conn.from, &conn.to)?;
        }
        Ok(a)
    }

    fn instantiate(
        &self,
        entry: &CatalogEntry,
        id: &str,
        params: &BTreeMap<String, String>,
    ) -> Result<Box<dyn Component>, SpecError> {
        let get = |name: &str| params.get(name).map(String::as_str);
        let bad = |msg: String| SpecError::new("InvalidParam", format!("{id}: {msg}"));
        let user = |name: &str| -> Result<Option<UserId>, SpecError> {
            get(name).map(|v| UserId::new(v).map_err(|e| bad(format!("{name}: {e}")))).transpose()
        };
        Ok(match entry.kind {
            GPS_SOURCE_KIND => {
                let fixes = match (get("trace"), get("fixes")) {
                    (Some(_), Some(_)) => return Err(bad("give trace or fixes, not both".into())),
                    (None, None) => return Err(SpecError::new("MissingParam", format!("{id}: trace or fixes"))),
                    (Some(path), None) => {
                        let text = std::fs::read_to_string(self.resolve(path))
                            .map_err(|e| bad(format!("trace {path}: {e}")))?;
                        parse_trace(&text).map_err(|e| bad(format!("trace {path}: {e}")))?
                    }
                    (None, Some(text)) => parse_trace(text).map_err(|e| bad(format!("fixes: {e}")))?,
                };
                let interval = get("interval_ms").unwrap_or("1000");
                let interval: u64 = interval.parse().map_err(|_| bad(format!("interval_ms '{interval}'")))?;
                let mode = match get("mode").unwrap_or("simulated").to_ascii_lowercase().as_str() {
                    "simulated" => GpsMode::Simulated,
                    "live" => GpsMode::Live(clock::system()),
                    other => return Err(bad(format!("mode '{other}'"))),
                };
                let user = user("user")?.expect("required params are checked first");
                Box::new(GpsSource::new(fixes, interval, user, mode).map_err(|e| bad(e.0))?)
            }
            catalog_kind if catalog_kind.starts_with("sms_") => {
                let own = user("own_number")?.expect("required params are checked first");
                let recipient = user("recipient")?;
                let address: GatewayAddress =
                    get("gateway").unwrap_or("loopback").parse().map_err(|e| bad(format!("gateway: {e}")))?;
                let gateway = open_gateway(&address, &self.loopback)
                    .map_err(|e| SpecError::new("GatewayUnreachable", format!("{id}: {e}")))?;
                if catalog_kind == SMS_XML_DEVICE_KIND {
                    Box::new(SmsDevice::xml(gateway, own, recipient))
                } else {
                    Box::new(SmsDevice::new(gateway, own, recipient))
                }
            }
            gloss_core::pipeline::ADAPTER_KIND => {
                let direction: AdaptDirection =
                    get("direction").unwrap_or_default().parse().map_err(bad)?;
                let codec = get("codec").unwrap_or(gloss_core::transport::LOCATION_XML_CODEC);
                Box::new(Adapter::new(direction, codec, &self.codecs).map_err(|e| bad(e.to_string()))?)
            }
            gloss_core::transport::FILE_SINK_KIND => {
                Box::new(FileSink::new(self.resolve(get("directory").unwrap_or_default())))
            }
            gloss_core::pipeline::EVENT_BUS_KIND => Box::new(EventBus::new()),
            other => return Err(SpecError::new("UnknownCatalogKind", format!("no factory for '{other}'"))),
        })
    }
}

fn check_params(entry: &CatalogEntry, c: &ComponentSpec) -> Result<BTreeMap<String, String>, SpecError> {
    for name in c.params.keys() {
        if entry.param(name).is_none() {
            return Err(SpecError::new(
                "InvalidParam",
                format!("{}: {} has no parameter '{name}'", c.id, entry.kind),
            ));
        }
    }
    for p in &entry.params {
        if p.required && !c.params.contains_key(p.name) {
            return Err(SpecError::new("MissingParam", format!("{}: {}", c.id, p.name)));
        }
        if let (ParamType::Enum, Some(v)) = (p.ty, c.params.get(p.name)) {
            if !p.values.contains(&v.0.to_ascii_lowercase().as_str()) {
                return Err(SpecError::new(
                    "InvalidParam",
                    format!("{}: {} must be one of {:?}", c.id, p.name, p.values),
                ));
            }
        }
    }
    Ok(c.params.iter().map(|(k, v)| (k.clone(), v.0.clone())).collect())
}
