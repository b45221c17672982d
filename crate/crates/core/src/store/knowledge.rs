//! Facility, landmark, hearsay and visibility tables, read from JSON lines.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::transport::UserId;
use crate::LatLongCoordinate;

/// Who may see something: everyone (`["*"]`) or a listed set of users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Audience {
    All,
    Users(BTreeSet<UserId>),
}

impl Audience {
    pub fn admits(&self, user: &UserId) -> bool {
        match self {
            Audience::All => true,
            Audience::Users(set) => set.contains(user),
        }
    }
}

impl Serialize for Audience {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Audience::All => ["*"].serialize(s),
            Audience::Users(set) => set.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Audience {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        if raw.iter().any(|s| s == "*") {
            return Ok(Audience::All);
        }
        raw.into_iter()
            .map(UserId::new)
            .collect::<Result<BTreeSet<_>, _>>()
            .map(Audience::Users)
            .map_err(serde::de::Error::custom)
    }
}

fn position(lat: f64, lon: f64) -> Result<LatLongCoordinate, String> {
    LatLongCoordinate::new(lat, lon).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFacility {
    id: String,
    name: String,
    category: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    info: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFacility", into = "RawFacility")]
pub struct Facility {
    pub id: String,
    pub name: String,
    pub category: String,
    pub position: LatLongCoordinate,
    pub info: String,
}

impl TryFrom<RawFacility> for Facility {
    type Error = String;
    fn try_from(r: RawFacility) -> Result<Self, String> {
        Ok(Self { position: position(r.lat, r.lon)?, id: r.id, name: r.name, category: r.category, info: r.info })
    }
}

impl From<Facility> for RawFacility {
    fn from(f: Facility) -> Self {
        Self { lat: f.position.lat(), lon: f.position.lon(), id: f.id, name: f.name, category: f.category, info: f.info }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLandmark {
    id: String,
    name: String,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLandmark", into = "RawLandmark")]
pub struct Landmark {
    pub id: String,
    pub name: String,
    pub position: LatLongCoordinate,
}

impl TryFrom<RawLandmark> for Landmark {
    type Error = String;
    fn try_from(r: RawLandmark) -> Result<Self, String> {
        Ok(Self { position: position(r.lat, r.lon)?, id: r.id, name: r.name })
    }
}

impl From<Landmark> for RawLandmark {
    fn from(l: Landmark) -> Self {
        Self { lat: l.position.lat(), lon: l.position.lon(), id: l.id, name: l.name }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHearsay {
    id: String,
    author: UserId,
    lat: f64,
    lon: f64,
    radius_m: f64,
    message: String,
    audience: Audience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHearsay", into = "RawHearsay")]
pub struct Hearsay {
    pub id: String,
    pub author: UserId,
    pub region_center: LatLongCoordinate,
    pub region_radius: f64,
    pub message: String,
    pub audience: Audience,
}

impl TryFrom<RawHearsay> for Hearsay {
    type Error = String;
    fn try_from(r: RawHearsay) -> Result<Self, String> {
        if !(r.radius_m.is_finite() && r.radius_m > 0.0) {
            return Err(format!("radius_m must be > 0, got {}", r.radius_m));
        }
        Ok(Self {
            region_center: position(r.lat, r.lon)?,
            id: r.id,
            author: r.author,
            region_radius: r.radius_m,
            message: r.message,
            audience: r.audience,
        })
    }
}

impl From<Hearsay> for RawHearsay {
    fn from(h: Hearsay) -> Self {
        Self {
            lat: h.region_center.lat(),
            lon: h.region_center.lon(),
            radius_m: h.region_radius,
            id: h.id,
            author: h.author,
            message: h.message,
            audience: h.audience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityRecord {
    pub user: UserId,
    pub observers: Audience,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Knowledge {
    pub facilities: Vec<Facility>,
    pub landmarks: Vec<Landmark>,
    pub hearsay: Vec<Hearsay>,
    pub visibility: BTreeMap<UserId, Audience>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeCounts {
    pub facilities: usize,
    pub landmarks: usize,
    pub hearsay: usize,
    pub visibility: usize,
}

impl Knowledge {
    pub fn counts(&self) -> KnowledgeCounts {
        KnowledgeCounts {
            facilities: self.facilities.len(),
            landmarks: self.landmarks.len(),
            hearsay: self.hearsay.len(),
            visibility: self.visibility.len(),
        }
    }
}

/// Parses JSON lines, skipping blank lines. `None` means the file is absent
/// and reads as empty.
pub(crate) fn parse_jsonl<T, K>(path: Option<&Path>, key: impl Fn(&T) -> K) -> Result<Vec<T>, StoreError>
where
    T: for<'de> Deserialize<'de>,
    K: Eq + std::hash::Hash + std::fmt::Display,
{
    let Some(path) = path else { return Ok(Vec::new()) };
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
    let fail = |line: usize, message: String| StoreError::ParseFailure { file: path.display().to_string(), line, message };
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(line).map_err(|e| fail(i + 1, e.to_string()))?;
        let k = key(&item);
        if seen.contains(&k) {
            return Err(fail(i + 1, format!("duplicate id '{k}'")));
        }
        seen.insert(k);
        out.push(item);
    }
    Ok(out)
}

pub(crate) fn read_knowledge(
    facilities: Option<&Path>,
    landmarks: Option<&Path>,
    hearsay: Option<&Path>,
    visibility: Option<&Path>,
) -> Result<Knowledge, StoreError> {
    Ok(Knowledge {
        facilities: parse_jsonl(facilities, |f: &Facility| f.id.clone())?,
        landmarks: parse_jsonl(landmarks, |l: &Landmark| l.id.clone())?,
        hearsay: parse_jsonl(hearsay, |h: &Hearsay| h.id.clone())?,
        visibility: parse_jsonl(visibility, |v: &VisibilityRecord| v.user.clone())?
            .into_iter()
            .map(|v| (v.user, v.observers))
            .collect(),
    })
}
