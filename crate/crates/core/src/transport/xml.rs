//! The location-event XML fragment.
//!
//! ```text
//! <locationEvent><user id="+447700900123"/><position lat="56.34020" lon="-2.79550"/><timestamp>2002-09-01T12:00:00.000Z</timestamp></locationEvent>
//! ```
//!
//! Encoding is canonical (fixed element and attribute order, five decimal
//! places, millisecond UTC timestamps). Decoding accepts any attribute
//! order, surrounding whitespace and both empty and open/close forms.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::location::{format_timestamp, LocationEvent, UserId};
use crate::geo::GeoError;
use crate::pipeline::{Codec, CodecError, Payload};
use crate::LatLongCoordinate;

pub const LOCATION_XML_CODEC: &str = "location_xml";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum XmlError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("range violation: {0}")]
    RangeViolation(String),
}

impl XmlError {
    pub fn code(&self) -> &'static str {
        match self {
            XmlError::MalformedXml(_) => "MalformedXml",
            XmlError::SchemaViolation(_) => "SchemaViolation",
            XmlError::RangeViolation(_) => "RangeViolation",
        }
    }
}

pub fn xml_encode(event: &LocationEvent) -> String {
    format!(
        "<locationEvent><user id=\"{}\"/><position lat=\"{:.5}\" lon=\"{:.5}\"/><timestamp>{}</timestamp></locationEvent>",
        event.user(),
        event.position().lat(),
        event.position().lon(),
        format_timestamp(&event.timestamp()),
    )
}

#[derive(Default)]
struct Fields {
    user: Option<String>,
    lat: Option<String>,
    lon: Option<String>,
    timestamp: Option<String>,
}

fn malformed(e: impl std::fmt::Display) -> XmlError {
    XmlError::MalformedXml(e.to_string())
}

fn schema(msg: impl Into<String>) -> XmlError {
    XmlError::SchemaViolation(msg.into())
}

fn attributes(el: &BytesStart<'_>) -> Result<Vec<(String, String)>, XmlError> {
    let mut out = Vec::new();
    for attr in el.attributes() {
        let attr = attr.map_err(malformed)?;
        let key = String::from_utf8(attr.key.as_ref().to_vec()).map_err(malformed)?;
        let value = attr.unescape_value().map_err(malformed)?.into_owned();
        if out.iter().any(|(k, _)| *k == key) {
            return Err(malformed(format!("duplicate attribute '{key}'")));
        }
        out.push((key, value));
    }
    Ok(out)
}

fn set_once(slot: &mut Option<String>, value: String, what: &str) -> Result<(), XmlError> {
    if slot.replace(value).is_some() {
        return Err(schema(format!("duplicate {what}")));
    }
    Ok(())
}

fn take_child(fields: &mut Fields, el: &BytesStart<'_>) -> Result<(), XmlError> {
    let name = el.name();
    match name.as_ref() {
        b"user" => {
            for (k, v) in attributes(el)? {
                match k.as_str() {
                    "id" => set_once(&mut fields.user, v, "user id")?,
                    other => return Err(schema(format!("unexpected attribute user/@{other}"))),
                }
            }
            Ok(())
        }
        b"position" => {
            for (k, v) in attributes(el)? {
                match k.as_str() {
                    "lat" => set_once(&mut fields.lat, v, "lat")?,
                    "lon" => set_once(&mut fields.lon, v, "lon")?,
                    other => return Err(schema(format!("unexpected attribute position/@{other}"))),
                }
            }
            Ok(())
        }
        other => Err(schema(format!("unexpected element <{}>", String::from_utf8_lossy(other)))),
    }
}

pub fn xml_decode(fragment: &str) -> Result<LocationEvent, XmlError> {
    let mut reader = Reader::from_str(fragment);
    reader.config_mut().trim_text(true);
    reader.config_mut().check_end_names = true;

    let mut fields = Fields::default();
    // Element names from the root down to the current element.
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut root_seen = false;
    let mut timestamp_text = String::new();

    loop {
        let ev = reader.read_event().map_err(malformed)?;
        match ev {
            XmlEvent::Eof => break,
            XmlEvent::Decl(_) | XmlEvent::Comment(_) | XmlEvent::PI(_) | XmlEvent::DocType(_) => {}
            XmlEvent::Start(el) | XmlEvent::Empty(el)
                if stack.is_empty() && root_seen =>
            {
                return Err(malformed(format!(
                    "second root element <{}>",
                    String::from_utf8_lossy(el.name().as_ref())
                )));
            }
            XmlEvent::Start(el) => {
                let name = el.name().as_ref().to_vec();
                match stack.len() {
                    0 => {
                        root_seen = true;
                        if name != b"locationEvent" {
                            return Err(schema(format!(
                                "root element <{}> is not <locationEvent>",
                                String::from_utf8_lossy(&name)
                            )));
                        }
                        if !attributes(&el)?.is_empty() {
                            return Err(schema("unexpected attributes on <locationEvent>"));
                        }
                    }
                    1 if name == b"timestamp" => {
                        if fields.timestamp.is_some() {
                            return Err(schema("duplicate timestamp"));
                        }
                        timestamp_text.clear();
                    }
                    1 => take_child(&mut fields, &el)?,
                    _ => {
                        return Err(schema(format!(
                            "unexpected nested element <{}>",
                            String::from_utf8_lossy(&name)
                        )))
                    }
                }
                stack.push(name);
            }
            XmlEvent::Empty(el) => match stack.len() {
                0 => {
                    root_seen = true;
                    if el.name().as_ref() != b"locationEvent" {
                        return Err(schema("root element is not <locationEvent>"));
                    }
                }
                1 if el.name().as_ref() == b"timestamp" => {
                    return Err(schema("empty <timestamp>"));
                }
                1 => take_child(&mut fields, &el)?,
                _ => return Err(schema("unexpected nested element")),
            },
            XmlEvent::End(_) => {
                let name = stack.pop().ok_or_else(|| malformed("unbalanced end tag"))?;
                if name == b"timestamp" && stack.len() == 1 {
                    fields.timestamp = Some(std::mem::take(&mut timestamp_text));
                }
            }
            XmlEvent::Text(t) => {
                let text = t.unescape().map_err(malformed)?;
                if text.trim().is_empty() {
                    continue;
                }
                match stack.last().map(Vec::as_slice) {
                    Some(b"timestamp") => timestamp_text.push_str(&text),
                    None => return Err(malformed("text outside the root element")),
                    Some(_) => return Err(schema("unexpected text content")),
                }
            }
            XmlEvent::CData(_) => return Err(schema("unexpected CDATA")),
        }
    }
    if !stack.is_empty() {
        return Err(malformed("unclosed element at end of input"));
    }
    if !root_seen {
        return Err(malformed("no root element"));
    }
    build(fields)
}

fn build(fields: Fields) -> Result<LocationEvent, XmlError> {
    let user = fields.user.ok_or_else(|| schema("missing user/@id"))?;
    let lat = fields.lat.ok_or_else(|| schema("missing position/@lat"))?;
    let lon = fields.lon.ok_or_else(|| schema("missing position/@lon"))?;
    let ts = fields.timestamp.ok_or_else(|| schema("missing <timestamp>"))?;

    let user = UserId::new(user).map_err(|e| schema(e.to_string()))?;
    let parse_deg = |s: &str, what: &str| -> Result<f64, XmlError> {
        let v: f64 = s.trim().parse().map_err(|_| schema(format!("{what} '{s}' is not a number")))?;
        if !v.is_finite() {
            return Err(schema(format!("{what} '{s}' is not finite")));
        }
        Ok(v)
    };
    let lat = parse_deg(&lat, "lat")?;
    let lon = parse_deg(&lon, "lon")?;
    let position = LatLongCoordinate::new(lat, lon).map_err(|e: GeoError| XmlError::RangeViolation(e.to_string()))?;
    let timestamp: DateTime<Utc> = DateTime::parse_from_rfc3339(ts.trim())
        .map_err(|e| schema(format!("timestamp '{ts}': {e}")))?
        .to_utc();
    LocationEvent::new(user, position, timestamp).map_err(|e| schema(e.to_string()))
}

/// [`Codec`] adapter for `LocationEvent` records.
#[derive(Debug, Default)]
pub struct LocationXmlCodec;

impl Codec for LocationXmlCodec {
    fn name(&self) -> &str {
        LOCATION_XML_CODEC
    }

    fn encode(&self, payload: &dyn Payload) -> Result<String, CodecError> {
        let any: &dyn std::any::Any = payload;
        any.downcast_ref::<LocationEvent>()
            .map(xml_encode)
            .ok_or_else(|| CodecError(format!("not a LocationEvent: {payload:?}")))
    }

    fn decode(&self, text: &str) -> Result<Arc<dyn Payload>, CodecError> {
        xml_decode(text).map(|e| Arc::new(e) as Arc<dyn Payload>).map_err(|e| CodecError(e.to_string()))
    }
}
