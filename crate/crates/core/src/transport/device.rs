use std::fmt;
use std::sync::Arc;

use super::gateway::{SmsGateway, WireSms};
use super::location::UserId;
use super::sms::{sms_split, MessageId, Reassembler};
use super::xml::xml_decode;
use crate::pipeline::{Activity, Component, ComponentError, Event, EventKind, Outbox, Ports};

pub const SMS_DEVICE_KIND: &str = "sms_device";
pub const SMS_XML_DEVICE_KIND: &str = "sms_xml_device";

/// Simulated phone. Text put on the plug goes out as SMS to `recipient`;
/// complete inbound messages come out of the socket.
pub struct SmsDevice {
    gateway: Arc<dyn SmsGateway>,
    own_number: UserId,
    recipient: Option<UserId>,
    validate_xml: bool,
    next_id: u32,
    reassembler: Reassembler,
    sent_segments: u64,
}

impl fmt::Debug for SmsDevice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmsDevice")
            .field("own_number", &self.own_number)
            .field("recipient", &self.recipient)
            .field("validate_xml", &self.validate_xml)
            .finish_non_exhaustive()
    }
}

impl SmsDevice {
    pub fn new(gateway: Arc<dyn SmsGateway>, own_number: UserId, recipient: Option<UserId>) -> Self {
        Self {
            gateway,
            own_number,
            recipient,
            validate_xml: false,
            next_id: rand::random(),
            reassembler: Reassembler::new(),
            sent_segments: 0,
        }
    }

    /// The XML-validating variant: inbound messages that are not location
    /// fragments are dropped with a diagnostic.
    pub fn xml(gateway: Arc<dyn SmsGateway>, own_number: UserId, recipient: Option<UserId>) -> Self {
        Self { validate_xml: true, ..Self::new(gateway, own_number, recipient) }
    }

    pub fn own_number(&self) -> &UserId {
        &self.own_number
    }

    pub fn sent_segments(&self) -> u64 {
        self.sent_segments
    }
}

impl Component for SmsDevice {
    fn catalog_kind(&self) -> &str {
        if self.validate_xml {
            SMS_XML_DEVICE_KIND
        } else {
            SMS_DEVICE_KIND
        }
    }

    fn ports(&self) -> Ports {
        Ports::filter(EventKind::Text, EventKind::Text)
    }

    fn is_source(&self) -> bool {
        true
    }

    fn start(&mut self) -> Result<(), ComponentError> {
        self.gateway.attach(&self.own_number).map_err(ComponentError::new)
    }

    fn put(&mut self, event: &Event, _out: &mut Outbox) -> Result<(), ComponentError> {
        let Some(text) = event.as_text() else {
            return Err(ComponentError::new("sms device accepts TEXT events only"));
        };
        let Some(to) = self.recipient.clone() else {
            return Err(ComponentError::new("no recipient configured; message dropped"));
        };
        let id = MessageId(self.next_id);
        self.next_id = self.next_id.wrapping_add(1);
        let segments = sms_split(text, id).map_err(ComponentError::new)?;
        for segment in segments {
            self.gateway
                .send(WireSms { from: self.own_number.clone(), to: to.clone(), segment })
                .map_err(ComponentError::new)?;
            self.sent_segments += 1;
        }
        Ok(())
    }

    fn pump(&mut self, out: &mut Outbox) -> Result<Activity, ComponentError> {
        let inbound = self.gateway.receive(&self.own_number);
        for sms in inbound {
            let message = match self.reassembler.accept(sms.from.as_str(), sms.segment) {
                Ok(Some(m)) => m,
                Ok(None) => continue,
                Err(e) => {
                    out.warn(format!("inbound segment from {} rejected: {e}", sms.from));
                    continue;
                }
            };
            if self.validate_xml {
                if let Err(e) = xml_decode(&message) {
                    out.warn(format!("inbound message from {} dropped ({}): {e}", sms.from, e.code()));
                    continue;
                }
            }
            out.emit(Event::text(message));
        }
        Ok(Activity::Idle)
    }
}
