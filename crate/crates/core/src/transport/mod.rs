//! The concrete component kit: GPS source, location XML codec, simulated
//! SMS devices and gateways, and the date-stamped file sink.

mod assemblies;
mod device;
pub mod gateway;
pub mod gps;
pub mod location;
mod sink;
pub mod sms;
pub mod xml;

use std::sync::Arc;

pub use assemblies::{build_mobile_assembly, build_server_assembly};
pub use device::{SmsDevice, SMS_DEVICE_KIND, SMS_XML_DEVICE_KIND};
pub use gateway::{open_gateway, GatewayAddress, GatewayError, LoopbackGateway, SmsGateway, TcpGateway, TcpGatewayServer, WireSms};
pub use gps::{load_trace, parse_trace, GpsMode, GpsSource, TraceError, GPS_SOURCE_KIND};
pub use location::{format_timestamp, GpsFix, LocationError, LocationEvent, UserId};
pub use sink::{stamped_name, FileSink, FILE_SINK_KIND};
pub use sms::{sms_reassemble, sms_split, MessageId, Reassembler, Reassembly, SmsError, SmsSegment};
pub use xml::{xml_decode, xml_encode, LocationXmlCodec, XmlError, LOCATION_XML_CODEC};

use crate::pipeline::CodecRegistry;

/// "text" plus "location_xml".
pub fn standard_codecs() -> CodecRegistry {
    let mut r = CodecRegistry::with_text();
    r.register(Arc::new(LocationXmlCodec));
    r
}
