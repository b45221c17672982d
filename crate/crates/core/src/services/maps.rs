use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::store::StoreError;
use crate::LatLongCoordinate;

pub const MAPS_FILE: &str = "maps.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    image_id: String,
    pixel_width: u32,
    pixel_height: u32,
    north_lat: f64,
    south_lat: f64,
    west_lon: f64,
    east_lon: f64,
}

/// A static image with a linear pixel to lat/lon mapping. Pixel (0, 0) is
/// the north-west corner. A map whose west edge is east of its east edge
/// crosses the antimeridian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap", into = "RawMap")]
pub struct MapCalibration {
    pub image_id: String,
    pub pixel_width: u32,
    pub pixel_height: u32,
    pub north_lat: f64,
    pub south_lat: f64,
    pub west_lon: f64,
    pub east_lon: f64,
}

impl TryFrom<RawMap> for MapCalibration {
    type Error = String;
    fn try_from(r: RawMap) -> Result<Self, String> {
        MapCalibration::new(r.image_id, r.pixel_width, r.pixel_height, r.north_lat, r.south_lat, r.west_lon, r.east_lon)
    }
}

impl From<MapCalibration> for RawMap {
    fn from(m: MapCalibration) -> Self {
        RawMap {
            image_id: m.image_id,
            pixel_width: m.pixel_width,
            pixel_height: m.pixel_height,
            north_lat: m.north_lat,
            south_lat: m.south_lat,
            west_lon: m.west_lon,
            east_lon: m.east_lon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl MapCalibration {
    pub fn new(
        image_id: impl Into<String>,
        pixel_width: u32,
        pixel_height: u32,
        north_lat: f64,
        south_lat: f64,
        west_lon: f64,
        east_lon: f64,
    ) -> Result<Self, String> {
        let image_id = image_id.into();
        if image_id.is_empty() || image_id.contains(['/', '\\']) || image_id.starts_with('.') {
            return Err(format!("bad image_id '{image_id}'"));
        }
        if pixel_width == 0 || pixel_height == 0 {
            return Err("pixel dimensions must be > 0".into());
        }
        let lat_ok = |v: f64| (-90.0..=90.0).contains(&v);
        let lon_ok = |v: f64| (-180.0..=180.0).contains(&v);
        if !(lat_ok(north_lat) && lat_ok(south_lat) && lon_ok(west_lon) && lon_ok(east_lon)) {
            return Err("map bounds out of range".into());
        }
        if north_lat <= south_lat {
            return Err("north_lat must exceed south_lat".into());
        }
        if west_lon == east_lon {
            return Err("west_lon must differ from east_lon".into());
        }
        Ok(Self { image_id, pixel_width, pixel_height, north_lat, south_lat, west_lon, east_lon })
    }

    pub fn lon_span(&self) -> f64 {
        if self.east_lon > self.west_lon {
            self.east_lon - self.west_lon
        } else {
            self.east_lon - self.west_lon + 360.0
        }
    }

    pub fn lat_span(&self) -> f64 {
        self.north_lat - self.south_lat
    }

    /// Area in square degrees; used only to rank maps.
    pub fn area(&self) -> f64 {
        self.lat_span() * self.lon_span()
    }

    /// Longitude offset east of the west edge, in [0, 360).
    fn east_of_west(&self, lon: f64) -> f64 {
        (lon - self.west_lon).rem_euclid(360.0)
    }

    pub fn contains(&self, p: &LatLongCoordinate) -> bool {
        let lat_in = p.lat() >= self.south_lat && p.lat() <= self.north_lat;
        let d = self.east_of_west(p.lon());
        lat_in && (d <= self.lon_span() || (p.lon() == self.west_lon))
    }

    pub fn contains_bbox(&self, b: &BBox) -> bool {
        let lat_in = b.south >= self.south_lat && b.north <= self.north_lat;
        let w = self.east_of_west(b.west);
        let e = self.east_of_west(b.east);
        lat_in && w <= e && e <= self.lon_span()
    }

    /// Fractional pixel coordinates; not clamped.
    pub fn project(&self, p: &LatLongCoordinate) -> (f64, f64) {
        let mut dx = self.east_of_west(p.lon());
        // Points just west of the west edge project slightly negative.
        if dx > self.lon_span() && dx > 180.0 + self.lon_span() / 2.0 {
            dx -= 360.0;
        }
        let x = dx / self.lon_span() * self.pixel_width as f64;
        let y = (self.north_lat - p.lat()) / self.lat_span() * self.pixel_height as f64;
        (x, y)
    }

    /// Inverse of [`MapCalibration::project`].
    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        let lat = self.north_lat - y / self.pixel_height as f64 * self.lat_span();
        let mut lon = self.west_lon + x / self.pixel_width as f64 * self.lon_span();
        if lon > 180.0 {
            lon -= 360.0;
        }
        (lat, lon)
    }

    pub fn clamp(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (x.clamp(0.0, self.pixel_width as f64), y.clamp(0.0, self.pixel_height as f64))
    }
}

fn by_area(a: &&MapCalibration, b: &&MapCalibration) -> std::cmp::Ordering {
    a.area().total_cmp(&b.area()).then_with(|| a.image_id.cmp(&b.image_id))
}

/// Smallest map containing `p`, ties by image id.
pub fn best_map_for_point<'a>(maps: &'a [MapCalibration], p: &LatLongCoordinate) -> Option<&'a MapCalibration> {
    maps.iter().filter(|m| m.contains(p)).min_by(by_area)
}

/// Smallest map containing `b`, else the largest map.
pub fn best_map_for_bbox<'a>(maps: &'a [MapCalibration], b: &BBox) -> Option<&'a MapCalibration> {
    maps.iter()
        .filter(|m| m.contains_bbox(b))
        .min_by(by_area)
        .or_else(|| maps.iter().max_by(|a, b| by_area(a, b).then_with(|| b.image_id.cmp(&a.image_id))))
}

pub fn load_maps(path: &Path) -> Result<Vec<MapCalibration>, StoreError> {
    crate::store::parse_jsonl(Some(path), |m: &MapCalibration| m.image_id.clone())
}

/// Reads `maps.jsonl` from `dir`; absent means no maps.
pub fn load_maps_dir(dir: &Path) -> Result<Vec<MapCalibration>, StoreError> {
    let p = dir.join(MAPS_FILE);
    if p.exists() {
        load_maps(&p)
    } else {
        Ok(Vec::new())
    }
}
