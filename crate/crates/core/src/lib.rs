pub mod clock;
pub mod geo;
pub mod pipeline;
pub mod services;
pub mod store;
pub mod transport;

pub type LatLongCoordinate = geo::LatLon<f64>;

pub use geo::{bearing, haversine, GeoError, EARTH_RADIUS_M};
