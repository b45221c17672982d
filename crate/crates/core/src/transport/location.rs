use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::geo::GeoError;
use crate::LatLongCoordinate;

/// Decimal places carried by coordinates on the wire.
pub const COORDINATE_DECIMALS: i32 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LocationError {
    #[error("invalid user id '{0}': expected '+' followed by 7-15 digits")]
    InvalidUserId(String),
    #[error(transparent)]
    Range(#[from] GeoError),
    #[error("timestamp {0} precedes the Unix epoch")]
    BeforeEpoch(String),
}

/// Phone-number-form user identifier: `+` followed by 7 to 15 digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(value: impl Into<String>) -> Result<Self, LocationError> {
        let value = value.into();
        let digits = value.strip_prefix('+').unwrap_or("");
        let ok = value.starts_with('+')
            && (7..=15).contains(&digits.len())
            && digits.bytes().all(|b| b.is_ascii_digit());
        if ok {
            Ok(Self(value))
        } else {
            Err(LocationError::InvalidUserId(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for UserId {
    type Err = LocationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for UserId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        UserId::new(s).map_err(serde::de::Error::custom)
    }
}

/// Truncates to whole milliseconds.
pub fn to_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(TimeDelta::milliseconds(1)).unwrap_or(t)
}

/// `2002-09-01T12:00:00.000Z`
pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

/// A user's position at an instant.
///
/// Positions are held at the wire precision (five decimal places) and
/// timestamps at millisecond precision, so the XML encoding is lossless.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationEvent {
    user: UserId,
    position: LatLongCoordinate,
    #[serde(serialize_with = "ser_ts")]
    timestamp: DateTime<Utc>,
}

fn ser_ts<S: serde::Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_timestamp(t))
}

impl LocationEvent {
    pub fn new(
        user: UserId,
        position: LatLongCoordinate,
        timestamp: DateTime<Utc>,
    ) -> Result<Self, LocationError> {
        if timestamp < DateTime::UNIX_EPOCH {
            return Err(LocationError::BeforeEpoch(timestamp.to_rfc3339()));
        }
        Ok(Self {
            user,
            position: position.quantized(COORDINATE_DECIMALS),
            timestamp: to_millis(timestamp),
        })
    }

    pub fn user(&self) -> &UserId {
        &self.user
    }

    pub fn position(&self) -> &LatLongCoordinate {
        &self.position
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }
}

/// One position reading from a GPS receiver (or trace file).
#[derive(Debug, Clone, PartialEq)]
pub struct GpsFix {
    pub position: LatLongCoordinate,
    pub fix_time: DateTime<Utc>,
}
