use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use super::device::SmsDevice;
use super::gateway::SmsGateway;
use super::gps::{GpsMode, GpsSource};
use super::location::{GpsFix, UserId};
use super::sink::FileSink;
use super::standard_codecs;
use super::xml::LOCATION_XML_CODEC;
use crate::pipeline::{AdaptDirection, Adapter, Assembly, EventBus, PipelineError};

fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn start_failed(component: &str, reason: impl ToString) -> PipelineError {
    PipelineError::StartFailed { component: component.to_string(), reason: reason.to_string() }
}

/// GPS -> XML generator -> adapter -> bus -> adapter -> SMS device.
pub fn build_mobile_assembly(
    id: &str,
    trace: Vec<GpsFix>,
    interval_ms: u64,
    user: UserId,
    gateway: Arc<dyn SmsGateway>,
    server: UserId,
    mode: GpsMode,
) -> Result<Assembly, PipelineError> {
    let codecs = standard_codecs();
    let adapter = |d: AdaptDirection| -> Result<Box<Adapter>, PipelineError> {
        Ok(Box::new(Adapter::new(d, LOCATION_XML_CODEC, &codecs)?))
    };
    let adapter_params = |d: AdaptDirection| params(&[("direction", d.as_str().into()), ("codec", LOCATION_XML_CODEC.into())]);

    let gps = GpsSource::new(trace, interval_ms, user.clone(), mode).map_err(|e| start_failed("gps_device", e))?;
    let mut a = Assembly::new(id);
    a.add_with_params(
        "gps_device",
        params(&[("interval_ms", interval_ms.to_string()), ("user", user.to_string())]),
        Box::new(gps),
    )?;
    a.add_with_params("xml_generator", adapter_params(AdaptDirection::RecordToText), adapter(AdaptDirection::RecordToText)?)?;
    a.add_with_params("gps_adapter", adapter_params(AdaptDirection::TextToRecord), adapter(AdaptDirection::TextToRecord)?)?;
    a.add("event_bus", Box::new(EventBus::new()))?;
    a.add_with_params("sms_adapter", adapter_params(AdaptDirection::RecordToText), adapter(AdaptDirection::RecordToText)?)?;
    a.add_with_params(
        "sms_device",
        params(&[("own_number", user.to_string()), ("recipient", server.to_string())]),
        Box::new(SmsDevice::new(gateway, user, Some(server))),
    )?;
    a.wire("gps_device", "xml_generator")?;
    a.wire("xml_generator", "gps_adapter")?;
    a.wire("gps_adapter", "event_bus")?;
    a.wire("event_bus", "sms_adapter")?;
    a.wire("sms_adapter", "sms_device")?;
    Ok(a)
}

/// XML-validating SMS device -> date-stamped file sink.
pub fn build_server_assembly(
    id: &str,
    gateway: Arc<dyn SmsGateway>,
    own_number: UserId,
    directory: &Path,
) -> Result<Assembly, PipelineError> {
    let mut a = Assembly::new(id);
    a.add_with_params(
        "sms_device",
        params(&[("own_number", own_number.to_string())]),
        Box::new(SmsDevice::xml(gateway, own_number, None)),
    )?;
    a.add_with_params(
        "saver",
        params(&[("directory", directory.display().to_string())]),
        Box::new(FileSink::new(directory)),
    )?;
    a.wire("sms_device", "saver")?;
    Ok(a)
}
