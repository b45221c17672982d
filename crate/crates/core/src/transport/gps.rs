//! GPS traces and the GPS source component.
//!
//! A trace is JSON lines, `{"lat": 56.34, "lon": -2.79, "time": "<ISO-8601>"}`,
//! where any line beginning `$GP` is instead read as an NMEA GGA sentence.

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveTime, TimeDelta, Utc};
use serde::Deserialize;

use super::location::{GpsFix, LocationEvent, UserId};
use crate::clock::Clock;
use crate::pipeline::{Activity, Component, ComponentError, Event, EventKind, Outbox, Ports};
use crate::LatLongCoordinate;

pub const GPS_SOURCE_KIND: &str = "gps_source";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading trace: {0}")]
    Io(String),
}

#[derive(Deserialize)]
struct JsonFix {
    lat: f64,
    lon: f64,
    time: String,
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s).map(|t| t.to_utc()).map_err(|e| format!("time '{s}': {e}"))
}

/// Parses an NMEA `$GPGGA` sentence. GGA carries only a time of day, so the
/// caller supplies the date.
pub fn parse_gga(sentence: &str, date: NaiveDate) -> Result<GpsFix, String> {
    let sentence = sentence.trim();
    let (body, checksum) = match sentence.split_once('*') {
        Some((b, c)) => (b, Some(c)),
        None => (sentence, None),
    };
    if let Some(c) = checksum {
        if c.len() == 2 && c.bytes().all(|b| b.is_ascii_hexdigit()) {
            let want = u8::from_str_radix(c, 16).unwrap();
            let got = body.bytes().skip(1).fold(0u8, |acc, b| acc ^ b);
            if want != got {
                return Err(format!("checksum mismatch: sentence says {want:02X}, computed {got:02X}"));
            }
        }
    }
    let f: Vec<&str> = body.split(',').collect();
    if f.len() < 7 || !f[0].ends_with("GGA") || !f[0].starts_with('$') {
        return Err("not a GGA sentence".into());
    }
    if f[6].trim() == "0" || f[6].trim().is_empty() {
        return Err("no fix (quality 0)".into());
    }
    let time = parse_hhmmss(f[1])?;
    let lat = parse_ddmm(f[2], 2)?;
    let lat = match f[3] {
        "N" => lat,
        "S" => -lat,
        other => return Err(format!("latitude hemisphere '{other}'")),
    };
    let lon = parse_ddmm(f[4], 3)?;
    let lon = match f[5] {
        "E" => lon,
        "W" => -lon,
        other => return Err(format!("longitude hemisphere '{other}'")),
    };
    let position = LatLongCoordinate::new(lat, lon).map_err(|e| e.to_string())?;
    Ok(GpsFix { position, fix_time: date.and_time(time).and_utc() })
}

fn parse_hhmmss(s: &str) -> Result<NaiveTime, String> {
    let bad = || format!("time field '{s}'");
    if s.len() < 6 || !s.is_char_boundary(6) {
        return Err(bad());
    }
    let num = |r: std::ops::Range<usize>| s[r].parse::<u32>().map_err(|_| bad());
    let (h, m, sec) = (num(0..2)?, num(2..4)?, num(4..6)?);
    let millis = match s.get(6..) {
        None | Some("") => 0,
        Some(frac) => {
            let frac = frac.strip_prefix('.').ok_or_else(bad)?;
            let v: f64 = format!("0.{frac}").parse().map_err(|_| bad())?;
            (v * 1000.0).round() as u32
        }
    };
    NaiveTime::from_hms_milli_opt(h, m, sec, millis.min(999)).ok_or_else(bad)
}

/// `ddmm.mmmm` (or `dddmm.mmmm` with `deg_digits = 3`) to decimal degrees.
fn parse_ddmm(s: &str, deg_digits: usize) -> Result<f64, String> {
    let bad = || format!("coordinate field '{s}'");
    if s.len() < deg_digits + 2 || !s.is_char_boundary(deg_digits) {
        return Err(bad());
    }
    let deg: f64 = s[..deg_digits].parse().map_err(|_| bad())?;
    let min: f64 = s[deg_digits..].parse().map_err(|_| bad())?;
    if !(0.0..60.0).contains(&min) {
        return Err(bad());
    }
    Ok(deg + min / 60.0)
}

/// Parses a whole trace. Blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<GpsFix>, TraceError> {
    let mut fixes: Vec<GpsFix> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| TraceError::Parse { line: i + 1, message };
        let fix = if line.starts_with("$GP") {
            let date = fixes.last().map(|f| f.fix_time.date_naive()).unwrap_or(DateTime::UNIX_EPOCH.date_naive());
            parse_gga(line, date).map_err(err)?
        } else {
            let raw: JsonFix = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            GpsFix {
                position: LatLongCoordinate::new(raw.lat, raw.lon).map_err(|e| err(e.to_string()))?,
                fix_time: parse_time(&raw.time).map_err(err)?,
            }
        };
        fixes.push(fix);
    }
    Ok(fixes)
}

pub fn load_trace(path: &Path) -> Result<Vec<GpsFix>, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(&text)
}

/// Renders fixes back into the JSON-lines trace format.
pub fn format_trace(fixes: &[GpsFix]) -> String {
    fixes
        .iter()
        .map(|f| {
            format!(
                "{{\"lat\": {}, \"lon\": {}, \"time\": \"{}\"}}\n",
                f.position.lat(),
                f.position.lon(),
                super::location::format_timestamp(&f.fix_time)
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
pub enum GpsMode {
    /// Emits one fix per pump; timestamps advance by the interval from the
    /// first fix's time.
    Simulated,
    /// Emits each fix once `interval` has elapsed on `clock` since the
    /// previous one, stamped with the clock time.
    Live(Arc<dyn Clock>),
}

/// Replays a trace as `LocationEvent` records.
#[derive(Debug)]
pub struct GpsSource {
    fixes: Vec<GpsFix>,
    interval: TimeDelta,
    user: UserId,
    mode: GpsMode,
    next: usize,
    next_due: Option<DateTime<Utc>>,
}

impl GpsSource {
    pub fn new(fixes: Vec<GpsFix>, interval_ms: u64, user: UserId, mode: GpsMode) -> Result<Self, ComponentError> {
        if interval_ms == 0 {
            return Err(ComponentError::new("gps interval must be > 0 ms"));
        }
        let interval = TimeDelta::try_milliseconds(interval_ms as i64)
            .ok_or_else(|| ComponentError::new("gps interval too large"))?;
        Ok(Self { fixes, interval, user, mode, next: 0, next_due: None })
    }

    pub fn remaining(&self) -> usize {
        self.fixes.len() - self.next
    }

    fn event_for(&self, index: usize, timestamp: DateTime<Utc>) -> Result<LocationEvent, ComponentError> {
        LocationEvent::new(self.user.clone(), self.fixes[index].position, timestamp).map_err(ComponentError::new)
    }
}

impl Component for GpsSource {
    fn catalog_kind(&self) -> &str {
        GPS_SOURCE_KIND
    }

    fn ports(&self) -> Ports {
        Ports::source(EventKind::Record)
    }

    fn is_source(&self) -> bool {
        true
    }

    fn pump(&mut self, out: &mut Outbox) -> Result<Activity, ComponentError> {
        if self.next >= self.fixes.len() {
            return Ok(Activity::Finished);
        }
        let timestamp = match &self.mode {
            GpsMode::Simulated => {
                let offset = self.interval * self.next as i32;
                self.fixes[0].fix_time + offset
            }
            GpsMode::Live(clock) => {
                let now = clock.now();
                match self.next_due {
                    Some(due) if now < due => return Ok(Activity::Pending),
                    _ => {}
                }
                self.next_due = Some(now + self.interval);
                now
            }
        };
        let event = self.event_for(self.next, timestamp)?;
        self.next += 1;
        out.emit(Event::record(event));
        Ok(if self.next < self.fixes.len() { Activity::Pending } else { Activity::Finished })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    #[test]
    fn nmea_gga_example() {
        // 5620.412 N -> 56 + 20.412/60 = 56.34020; 00247.730 W -> -(2 + 47.730/60) = -2.79550
        let date = NaiveDate::from_ymd_opt(2002, 9, 1).unwrap();
        let fix = parse_gga("$GPGGA,120000,5620.412,N,00247.730,W,1,05,1.2,30.0,M,,,,*hh", date).unwrap();
        assert!((fix.position.lat() - 56.34020).abs() < 1e-12);
        assert!((fix.position.lon() - -2.79550).abs() < 1e-12);
        assert_eq!(fix.fix_time.to_rfc3339(), "2002-09-01T12:00:00+00:00");
    }

    #[test]
    fn nmea_checksum_verified_when_hex() {
        let date = NaiveDate::from_ymd_opt(2002, 9, 1).unwrap();
        let body = "GPGGA,120000,5620.412,N,00247.730,W,1,05,1.2,30.0,M,,,,";
        let sum = body.bytes().fold(0u8, |a, b| a ^ b);
        assert!(parse_gga(&format!("${body}*{sum:02X}"), date).is_ok());
        assert!(parse_gga(&format!("${body}*{:02X}", sum ^ 1), date).is_err());
        assert!(parse_gga("$GPGGA,120000,5620.412,N,00247.730,W,0,05,1.2,30.0,M,,,,", date).is_err());
    }

    #[test]
    fn mixed_trace() {
        let text = "{\"lat\": 56.0, \"lon\": -3.0, \"time\": \"2002-09-01T11:59:00Z\"}\n\n$GPGGA,120000,5620.412,N,00247.730,W,1,05,1.2,30.0,M,,,,*hh\n";
        let fixes = parse_trace(text).unwrap();
        assert_eq!(fixes.len(), 2);
        assert_eq!(fixes[1].fix_time.date_naive(), NaiveDate::from_ymd_opt(2002, 9, 1).unwrap());
        assert_eq!(parse_trace(&format_trace(&fixes)).unwrap(), fixes);
        let err = parse_trace("{\"lat\": 95, \"lon\": 0, \"time\": \"2002-09-01T00:00:00Z\"}").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 1, .. }));
    }

    fn fixes(n: usize) -> Vec<GpsFix> {
        let base = DateTime::parse_from_rfc3339("2002-09-01T12:00:00Z").unwrap().to_utc();
        (0..n)
            .map(|i| GpsFix {
                position: LatLongCoordinate::new(56.0 + i as f64 * 0.001, -2.8).unwrap(),
                fix_time: base + TimeDelta::seconds(i as i64 * 7),
            })
            .collect()
    }

    fn drain(src: &mut GpsSource) -> Vec<LocationEvent> {
        let mut out = Outbox::default();
        for _ in 0..100 {
            if src.pump(&mut out).unwrap() == Activity::Finished {
                break;
            }
        }
        out.events().iter().map(|e| e.downcast::<LocationEvent>().unwrap().clone()).collect()
    }

    #[test]
    fn simulated_emits_one_event_per_fix_in_order() {
        let user = UserId::new("+447700900123").unwrap();
        let mut src = GpsSource::new(fixes(3), 1000, user, GpsMode::Simulated).unwrap();
        let events = drain(&mut src);
        assert_eq!(events.len(), 3);
        for (i, e) in events.iter().enumerate() {
            assert_eq!(e.position().lat(), 56.0 + i as f64 * 0.001);
            assert_eq!(e.timestamp(), fixes(1)[0].fix_time + TimeDelta::milliseconds(1000 * i as i64));
        }
    }

    #[test]
    fn empty_trace_finishes_immediately() {
        let user = UserId::new("+447700900123").unwrap();
        let mut src = GpsSource::new(Vec::new(), 1000, user, GpsMode::Simulated).unwrap();
        let mut out = Outbox::default();
        assert_eq!(src.pump(&mut out).unwrap(), Activity::Finished);
        assert!(out.events().is_empty());
        assert!(GpsSource::new(Vec::new(), 0, UserId::new("+447700900123").unwrap(), GpsMode::Simulated).is_err());
    }

    #[test]
    fn live_mode_waits_for_interval() {
        let start = DateTime::parse_from_rfc3339("2020-01-01T00:00:00Z").unwrap().to_utc();
        let clock = ManualClock::new(start);
        let user = UserId::new("+447700900123").unwrap();
        let mut src = GpsSource::new(fixes(2), 500, user, GpsMode::Live(Arc::new(clock.clone()))).unwrap();
        let mut out = Outbox::default();
        assert_eq!(src.pump(&mut out).unwrap(), Activity::Pending);
        assert_eq!(src.pump(&mut out).unwrap(), Activity::Pending);
        assert_eq!(out.events().len(), 1);
        clock.advance(TimeDelta::milliseconds(500));
        assert_eq!(src.pump(&mut out).unwrap(), Activity::Finished);
        let last = out.events()[1].downcast::<LocationEvent>().unwrap();
        assert_eq!(last.timestamp(), start + TimeDelta::milliseconds(500));
    }
}
