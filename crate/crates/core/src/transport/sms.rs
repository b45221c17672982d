//! Concatenated-SMS segmentation.
//!
//! Every segment travels as `GX|<8-hex id>|<ii>/<tt>|<payload>`: an
//! 18-character fixed-width header followed by at most 142 payload
//! characters, so no segment exceeds the 160-character SMS budget.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const SMS_MAX_CHARS: usize = 160;
pub const HEADER_CHARS: usize = 18;
pub const PAYLOAD_CHARS: usize = SMS_MAX_CHARS - HEADER_CHARS;
pub const MAX_SEGMENTS: usize = 99;
pub const MAX_MESSAGE_CHARS: usize = PAYLOAD_CHARS * MAX_SEGMENTS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmsError {
    #[error("message of {len} characters exceeds the {max}-character limit")]
    MessageTooLong { len: usize, max: usize },
    #[error("non 7-bit character at position {position}")]
    InvalidCharset { position: usize },
    #[error("segments disagree on the segment total")]
    InconsistentTotal,
    #[error("segments belong to different messages")]
    MixedMessageIds,
    #[error("no segments supplied")]
    NoSegments,
    #[error("malformed segment: {0}")]
    MalformedSegment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct MessageId(pub u32);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.0)
    }
}

impl FromStr for MessageId {
    type Err = SmsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 8 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(SmsError::MalformedSegment(format!("bad message id '{s}'")));
        }
        u32::from_str_radix(s, 16)
            .map(MessageId)
            .map_err(|e| SmsError::MalformedSegment(e.to_string()))
    }
}

impl From<MessageId> for String {
    fn from(id: MessageId) -> Self {
        id.to_string()
    }
}

impl TryFrom<String> for MessageId {
    type Error = SmsError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SmsSegment {
    pub message_id: MessageId,
    /// 1-based.
    pub index: u8,
    pub total: u8,
    pub payload: String,
}

impl SmsSegment {
    /// The full SMS text: header followed by payload.
    pub fn to_wire(&self) -> String {
        format!("GX|{}|{:02}/{:02}|{}", self.message_id, self.index, self.total, self.payload)
    }

    pub fn from_wire(text: &str) -> Result<Self, SmsError> {
        let bad = || SmsError::MalformedSegment(text.chars().take(40).collect());
        if text.len() < HEADER_CHARS || !text.is_ascii() {
            return Err(bad());
        }
        let (header, payload) = text.split_at(HEADER_CHARS);
        let h = header.as_bytes();
        if &h[0..3] != b"GX|" || h[11] != b'|' || h[14] != b'/' || h[17] != b'|' {
            return Err(bad());
        }
        let message_id = header[3..11].parse()?;
        let num = |s: &str| -> Result<u8, SmsError> {
            if !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            s.parse().map_err(|_| bad())
        };
        let seg = Self { message_id, index: num(&header[12..14])?, total: num(&header[15..17])?, payload: payload.to_string() };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<(), SmsError> {
        if self.index == 0 || self.index > self.total {
            return Err(SmsError::MalformedSegment(format!("index {}/{}", self.index, self.total)));
        }
        if self.payload.len() > PAYLOAD_CHARS || !self.payload.is_ascii() {
            return Err(SmsError::MalformedSegment("payload exceeds 142 7-bit characters".into()));
        }
        Ok(())
    }
}

/// Splits `message` into segments of at most [`PAYLOAD_CHARS`] characters.
/// An empty message yields one segment with an empty payload.
pub fn sms_split(message: &str, message_id: MessageId) -> Result<Vec<SmsSegment>, SmsError> {
    if let Some(position) = message.bytes().position(|b| !b.is_ascii()) {
        return Err(SmsError::InvalidCharset { position });
    }
    if message.len() > MAX_MESSAGE_CHARS {
        return Err(SmsError::MessageTooLong { len: message.len(), max: MAX_MESSAGE_CHARS });
    }
    let total = message.len().div_ceil(PAYLOAD_CHARS).max(1);
    let bytes = message.as_bytes();
    Ok((0..total)
        .map(|i| {
            let start = i * PAYLOAD_CHARS;
            let end = (start + PAYLOAD_CHARS).min(bytes.len());
            SmsSegment {
                message_id,
                index: (i + 1) as u8,
                total: total as u8,
                // ASCII, so any byte boundary is a char boundary.
                payload: message[start..end].to_string(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reassembly {
    Complete(String),
    Incomplete { missing: BTreeSet<u8> },
}

/// Reassembles one message from segments in any order. Duplicate indices
/// keep the first payload seen.
pub fn sms_reassemble(segments: &[SmsSegment]) -> Result<Reassembly, SmsError> {
    let first = segments.first().ok_or(SmsError::NoSegments)?;
    let mut parts: BTreeMap<u8, &str> = BTreeMap::new();
    for seg in segments {
        if seg.message_id != first.message_id {
            return Err(SmsError::MixedMessageIds);
        }
        if seg.total != first.total {
            return Err(SmsError::InconsistentTotal);
        }
        seg.validate()?;
        parts.entry(seg.index).or_insert(&seg.payload);
    }
    let missing: BTreeSet<u8> = (1..=first.total).filter(|i| !parts.contains_key(i)).collect();
    if missing.is_empty() {
        Ok(Reassembly::Complete(parts.into_values().collect()))
    } else {
        Ok(Reassembly::Incomplete { missing })
    }
}

const COMPLETED_MEMORY: usize = 4096;

/// Incremental reassembly keyed by (sender, message id).
///
/// Each message is released exactly once; segments of an already
/// completed message are ignored.
#[derive(Debug, Default)]
pub struct Reassembler {
    partial: BTreeMap<(String, MessageId), Vec<SmsSegment>>,
    completed: HashSet<(String, MessageId)>,
    completed_order: VecDeque<(String, MessageId)>,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accept(&mut self, sender: &str, segment: SmsSegment) -> Result<Option<String>, SmsError> {
        let key = (sender.to_string(), segment.message_id);
        if self.completed.contains(&key) {
            return Ok(None);
        }
        let buffer = self.partial.entry(key.clone()).or_default();
        buffer.push(segment);
        match sms_reassemble(buffer) {
            Ok(Reassembly::Complete(text)) => {
                self.partial.remove(&key);
                self.remember(key);
                Ok(Some(text))
            }
            Ok(Reassembly::Incomplete { .. }) => Ok(None),
            Err(e) => {
                // Drop the offending segment, keep the consistent prefix.
                buffer.pop();
                if buffer.is_empty() {
                    self.partial.remove(&key);
                }
                Err(e)
            }
        }
    }

    pub fn pending_messages(&self) -> usize {
        self.partial.len()
    }

    fn remember(&mut self, key: (String, MessageId)) {
        if self.completed_order.len() >= COMPLETED_MEMORY {
            if let Some(old) = self.completed_order.pop_front() {
                self.completed.remove(&old);
            }
        }
        self.completed.insert(key.clone());
        self.completed_order.push_back(key);
    }
}
