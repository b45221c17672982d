//! User-facing queries over a [`Store`]: location with map placement,
//! trails, smart town, hearsay delivery and radar.

mod maps;
#[cfg(test)]
mod tests;

use std::cmp::Ordering;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::Serialize;

pub use maps::{best_map_for_bbox, best_map_for_point, load_maps, load_maps_dir, BBox, MapCalibration, MAPS_FILE};

use crate::geo::{bearing, haversine, metres_per_degree};
use crate::store::{Facility, Hearsay, Store, StoreError};
use crate::transport::{LocationEvent, UserId};
use crate::LatLongCoordinate;

/// Smallest half-span of a trail's bounding box, per axis.
pub const MIN_HALF_SPAN_M: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("no events in the requested trail")]
    EmptyTrail,
    #[error("user {0} has no known location")]
    NoKnownLocation(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::EmptyTrail => "EmptyTrail",
            ServiceError::NoKnownLocation(_) => "NoKnownLocation",
            ServiceError::InvalidParameter(_) => "InvalidParameter",
            ServiceError::Store(e) => e.code(),
        }
    }
}

fn check_radius(radius: f64) -> Result<(), ServiceError> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(ServiceError::InvalidParameter(format!("radius must be > 0, got {radius}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapPlacement {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Located {
    pub event: LocationEvent,
    pub map: Option<MapPlacement>,
}

pub fn locate_user(store: &Store, maps: &[MapCalibration], user: &UserId) -> Option<Located> {
    let event = store.latest_location(user)?;
    let map = best_map_for_point(maps, event.position()).map(|m| {
        let (x, y) = m.clamp(m.project(event.position()));
        MapPlacement { image_id: m.image_id.clone(), x, y }
    });
    Some(Located { event, map })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrailView {
    pub events: Vec<LocationEvent>,
    pub bbox: BBox,
    pub map: Option<MapCalibration>,
    /// One per event when a map is available, else empty.
    pub points: Vec<Pixel>,
}

/// Bounding box of `points` padded by 10% per side, widened per axis to at
/// least [`MIN_HALF_SPAN_M`] either side of the centre.
pub fn trail_bbox(points: &[LatLongCoordinate]) -> Option<BBox> {
    let first = points.first()?;
    let (mut s, mut n, mut w, mut e) = (first.lat(), first.lat(), first.lon(), first.lon());
    for p in points {
        s = s.min(p.lat());
        n = n.max(p.lat());
        w = w.min(p.lon());
        e = e.max(p.lon());
    }
    let (pad_lat, pad_lon) = ((n - s) * 0.1, (e - w) * 0.1);
    let (mut s, mut n, mut w, mut e) = (s - pad_lat, n + pad_lat, w - pad_lon, e + pad_lon);

    let mpd: f64 = metres_per_degree();
    let (clat, clon) = ((s + n) / 2.0, (w + e) / 2.0);
    let min_lat_half = MIN_HALF_SPAN_M / mpd;
    let cos = clat.to_radians().cos();
    let min_lon_half = if cos > 1e-9 { (MIN_HALF_SPAN_M / (mpd * cos)).min(180.0) } else { 180.0 };
    if (n - s) / 2.0 < min_lat_half {
        s = clat - min_lat_half;
        n = clat + min_lat_half;
    }
    if (e - w) / 2.0 < min_lon_half {
        w = clon - min_lon_half;
        e = clon + min_lon_half;
    }
    Some(BBox { south: s.max(-90.0), west: w.max(-180.0), north: n.min(90.0), east: e.min(180.0) })
}

pub fn render_trail(
    store: &Store,
    maps: &[MapCalibration],
    user: &UserId,
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
) -> Result<TrailView, ServiceError> {
    let events = store.trail(user, from, to)?;
    let positions: Vec<LatLongCoordinate> = events.iter().map(|e| *e.position()).collect();
    let bbox = trail_bbox(&positions).ok_or(ServiceError::EmptyTrail)?;
    let map = best_map_for_bbox(maps, &bbox).cloned();
    let points = match &map {
        Some(m) => positions
            .iter()
            .map(|p| {
                let (x, y) = m.clamp(m.project(p));
                Pixel { x, y }
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(TrailView { events, bbox, map, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmartTownEntry {
    pub rank: usize,
    pub facility: Facility,
    pub distance_m: f64,
    pub prev: Option<String>,
    pub next: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmartTownResult {
    pub entries: Vec<SmartTownEntry>,
}

pub fn smart_town(
    store: &Store,
    position: &LatLongCoordinate,
    radius: f64,
    category: Option<&str>,
) -> Result<SmartTownResult, ServiceError> {
    check_radius(radius)?;
    let knowledge = store.knowledge();
    let mut hits: Vec<(f64, &Facility)> = knowledge
        .facilities
        .iter()
        .filter(|f| category.is_none_or(|c| f.category == c))
        .map(|f| (haversine(position, &f.position), f))
        .filter(|(d, _)| *d <= radius)
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    let ids: Vec<String> = hits.iter().map(|(_, f)| f.id.clone()).collect();
    let entries = hits
        .into_iter()
        .enumerate()
        .map(|(i, (d, f))| SmartTownEntry {
            rank: i + 1,
            facility: f.clone(),
            distance_m: d,
            prev: i.checked_sub(1).map(|j| ids[j].clone()),
            next: ids.get(i + 1).cloned(),
        })
        .collect();
    Ok(SmartTownResult { entries })
}

/// Hearsay items whose region contains the event, addressed to its user
/// and not delivered to them before. Marks each one delivered.
pub fn hearsay_check(store: &Store, event: &LocationEvent) -> Vec<Hearsay> {
    let knowledge = store.knowledge();
    let mut items: Vec<&Hearsay> = knowledge.hearsay.iter().collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = Vec::new();
    for h in items {
        if !h.audience.admits(event.user()) {
            continue;
        }
        if haversine(event.position(), &h.region_center) > h.region_radius {
            continue;
        }
        match store.mark_delivered(event.user(), &h.id) {
            Ok(true) => out.push(h.clone()),
            Ok(false) => {}
            // The table was swapped between snapshot and mark.
            Err(e) => log::debug!("hearsay {}: {e}", h.id),
        }
    }
    out
}

/// Runs [`hearsay_check`] on every event the store ingests from now on.
pub fn install_hearsay_hook(store: &Store) {
    store.set_ingest_hook(Arc::new(|s, e| {
        for h in hearsay_check(s, e) {
            log::info!("hearsay {} delivered to {}", h.id, e.user());
        }
    }));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RadarKind {
    Landmark,
    Facility,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadarEntry {
    pub kind: RadarKind,
    pub id: String,
    pub name: String,
    pub distance: f64,
    pub bearing: f64,
}

pub fn radar_order(a: &RadarEntry, b: &RadarEntry) -> Ordering {
    a.distance.total_cmp(&b.distance).then_with(|| (a.kind, &a.id).cmp(&(b.kind, &b.id)))
}

pub fn radar(store: &Store, user: &UserId, radius: f64) -> Result<Vec<RadarEntry>, ServiceError> {
    check_radius(radius)?;
    let me = store.latest_location(user).ok_or_else(|| ServiceError::NoKnownLocation(user.to_string()))?;
    let here = *me.position();
    let entry = |kind, id: &str, name: &str, p: &LatLongCoordinate| -> Option<RadarEntry> {
        let distance = haversine(&here, p);
        (distance <= radius).then(|| RadarEntry {
            kind,
            id: id.to_string(),
            name: name.to_string(),
            distance,
            bearing: bearing(&here, p).unwrap_or(0.0),
        })
    };
    let knowledge = store.knowledge();
    let mut out: Vec<RadarEntry> = Vec::new();
    out.extend(knowledge.landmarks.iter().filter_map(|l| entry(RadarKind::Landmark, &l.id, &l.name, &l.position)));
    out.extend(knowledge.facilities.iter().filter_map(|f| entry(RadarKind::Facility, &f.id, &f.name, &f.position)));
    for other in store.users() {
        if &other == user || !store.visible_to(&other, user) {
            continue;
        }
        if let Some(loc) = store.latest_location(&other) {
            out.extend(entry(RadarKind::User, other.as_str(), other.as_str(), loc.position()));
        }
    }
    out.sort_by(radar_order);
    Ok(out)
}
