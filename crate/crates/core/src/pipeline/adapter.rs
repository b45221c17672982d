use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::component::{Component, ComponentError, Outbox, Ports};
use super::event::{Event, EventKind, Payload};
use super::PipelineError;

pub const ADAPTER_KIND: &str = "xml_codec_adapter";
pub const TEXT_CODEC: &str = "text";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct CodecError(pub String);

/// Converts record payloads to text and back.
pub trait Codec: Send + Sync {
    fn name(&self) -> &str;
    fn encode(&self, payload: &dyn Payload) -> Result<String, CodecError>;
    fn decode(&self, text: &str) -> Result<Arc<dyn Payload>, CodecError>;
}

/// Wraps text as a `String` record and unwraps it again.
#[derive(Debug, Default)]
pub struct TextCodec;

impl Codec for TextCodec {
    fn name(&self) -> &str {
        TEXT_CODEC
    }

    fn encode(&self, payload: &dyn Payload) -> Result<String, CodecError> {
        let any: &dyn std::any::Any = payload;
        any.downcast_ref::<String>()
            .cloned()
            .ok_or_else(|| CodecError(format!("text codec cannot encode {payload:?}")))
    }

    fn decode(&self, text: &str) -> Result<Arc<dyn Payload>, CodecError> {
        Ok(Arc::new(text.to_string()))
    }
}

#[derive(Clone, Default)]
pub struct CodecRegistry {
    codecs: BTreeMap<String, Arc<dyn Codec>>,
}

impl fmt::Debug for CodecRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.codecs.keys()).finish()
    }
}

impl CodecRegistry {
    /// A registry holding only the text codec.
    pub fn with_text() -> Self {
        let mut r = Self::default();
        r.register(Arc::new(TextCodec));
        r
    }

    pub fn register(&mut self, codec: Arc<dyn Codec>) {
        self.codecs.insert(codec.name().to_string(), codec);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Codec>, PipelineError> {
        self.codecs.get(name).cloned().ok_or_else(|| PipelineError::UnknownCodec(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.codecs.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptDirection {
    RecordToText,
    TextToRecord,
}

impl AdaptDirection {
    pub fn input(self) -> EventKind {
        match self {
            AdaptDirection::RecordToText => EventKind::Record,
            AdaptDirection::TextToRecord => EventKind::Text,
        }
    }

    pub fn output(self) -> EventKind {
        self.input().other()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdaptDirection::RecordToText => "record_to_text",
            AdaptDirection::TextToRecord => "text_to_record",
        }
    }
}

impl std::str::FromStr for AdaptDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "record_to_text" => Ok(AdaptDirection::RecordToText),
            "text_to_record" => Ok(AdaptDirection::TextToRecord),
            other => Err(format!("unknown adapter direction '{other}'")),
        }
    }
}

fn convert(event: &Event, direction: AdaptDirection, codec: &dyn Codec) -> Result<Event, PipelineError> {
    match (direction, event) {
        (AdaptDirection::RecordToText, Event::Record(p)) => codec
            .encode(p.as_ref())
            .map(Event::text)
            .map_err(|e| PipelineError::CodecFailure(e.0)),
        (AdaptDirection::TextToRecord, Event::Text(s)) => codec
            .decode(s)
            .map(Event::Record)
            .map_err(|e| PipelineError::CodecFailure(e.0)),
        (d, e) => Err(PipelineError::KindMismatch { socket: e.kind(), plug: d.input() }),
    }
}

/// Converts `event` to the opposite kind through the named codec.
pub fn adapt(
    event: &Event,
    direction: AdaptDirection,
    codec: &str,
    registry: &CodecRegistry,
) -> Result<Event, PipelineError> {
    let codec = registry.get(codec)?;
    convert(event, direction, codec.as_ref())
}

/// A component with one plug of one kind and one socket of the other.
pub struct Adapter {
    direction: AdaptDirection,
    codec: Arc<dyn Codec>,
}

impl fmt::Debug for Adapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Adapter")
            .field("direction", &self.direction)
            .field("codec", &self.codec.name())
            .finish()
    }
}

impl Adapter {
    pub fn new(direction: AdaptDirection, codec: &str, registry: &CodecRegistry) -> Result<Self, PipelineError> {
        Ok(Self { direction, codec: registry.get(codec)? })
    }

    pub fn direction(&self) -> AdaptDirection {
        self.direction
    }
}

impl Component for Adapter {
    fn catalog_kind(&self) -> &str {
        ADAPTER_KIND
    }

    fn ports(&self) -> Ports {
        Ports::filter(self.direction.input(), self.direction.output())
    }

    fn put(&mut self, event: &Event, out: &mut Outbox) -> Result<(), ComponentError> {
        let converted = convert(event, self.direction, self.codec.as_ref()).map_err(ComponentError::new)?;
        out.emit(converted);
        Ok(())
    }
}
