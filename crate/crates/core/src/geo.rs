//! Spherical-earth geodesy, generic over the float type.
//!
//! Distances use the haversine great-circle formula on a sphere of mean
//! radius [`EARTH_RADIUS_M`]; bearings are initial great-circle bearings
//! measured clockwise from true north.

use std::fmt;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

/// Mean earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Float types usable for coordinates and distances.
pub trait Scalar: Float + FromPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static {}

#[inline]
fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("float literal representable")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(String),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(String),
    #[error("bearing is undefined for coincident points")]
    CoincidentPoints,
}

/// A latitude/longitude pair in decimal degrees.
///
/// Construction enforces `lat ∈ [-90, 90]` and `lon ∈ [-180, 180]`; NaN is
/// rejected by the same checks.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct LatLon<T> {
    lat: T,
    lon: T,
}

impl<T: Scalar> LatLon<T> {
    pub fn new(lat: T, lon: T) -> Result<Self, GeoError> {
        if !(lat >= lit(-90.0) && lat <= lit(90.0)) {
            return Err(GeoError::LatitudeOutOfRange(lat.to_string()));
        }
        if !(lon >= lit(-180.0) && lon <= lit(180.0)) {
            return Err(GeoError::LongitudeOutOfRange(lon.to_string()));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> T {
        self.lat
    }

    pub fn lon(&self) -> T {
        self.lon
    }

    /// Great-circle distance to `other` in metres.
    pub fn distance_to(&self, other: &Self) -> T {
        haversine(self, other)
    }

    /// Rounds both components to `decimals` places, folding `-0` into `+0`.
    pub fn quantized(&self, decimals: i32) -> Self {
        let scale = lit::<T>(10.0).powi(decimals);
        let q = |v: T| {
            let r = (v * scale).round() / scale;
            if r == T::zero() {
                T::zero()
            } else {
                r
            }
        };
        // Rounding cannot leave the closed ranges: the bounds are integers.
        Self { lat: q(self.lat), lon: q(self.lon) }
    }
}

impl<'de, T> Deserialize<'de> for LatLon<T>
where
    T: Scalar + Deserialize<'de>,
{
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw<T> {
            lat: T,
            lon: T,
        }
        let raw = Raw::<T>::deserialize(deserializer)?;
        LatLon::new(raw.lat, raw.lon).map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> fmt::Display for LatLon<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Great-circle distance in metres between two points.
///
/// Exactly symmetric in its arguments and exactly zero for identical points.
pub fn haversine<T: Scalar>(a: &LatLon<T>, b: &LatLon<T>) -> T {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let half_dphi = (phi2 - phi1) / lit(2.0);
    let half_dlambda = (b.lon - a.lon).to_radians() / lit(2.0);
    let s1 = half_dphi.sin();
    let s2 = half_dlambda.sin();
    let h = s1 * s1 + phi1.cos() * phi2.cos() * s2 * s2;
    let h = h.min(T::one()).max(T::zero());
    lit::<T>(2.0 * EARTH_RADIUS_M) * h.sqrt().asin()
}

/// Initial great-circle bearing from `a` to `b`, degrees in `[0, 360)`.
pub fn bearing<T: Scalar>(a: &LatLon<T>, b: &LatLon<T>) -> Result<T, GeoError> {
    if a == b {
        return Err(GeoError::CoincidentPoints);
    }
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    Ok(normalize_degrees(y.atan2(x).to_degrees()))
}

/// Maps any finite angle into `[0, 360)`.
pub fn normalize_degrees<T: Scalar>(deg: T) -> T {
    let full = lit::<T>(360.0);
    let mut d = deg % full;
    if d < T::zero() {
        d = d + full;
    }
    // `-tiny + 360` can round up to exactly 360.
    if d >= full {
        d = T::zero();
    }
    d
}

/// Metres spanned by one degree of latitude (and of longitude at the equator).
pub fn metres_per_degree<T: Scalar>() -> T {
    lit::<T>(EARTH_RADIUS_M) * lit::<T>(std::f64::consts::PI) / lit(180.0)
}
