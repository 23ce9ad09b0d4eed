use crate::error::{Error, Result};

use super::{CityRecord, StationRecord};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance between two points given in degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Closest station to the city centroid. Equal distances resolve to the
/// lexicographically smallest station id.
pub fn nearest_station<'a>(city: &CityRecord, stations: &'a [StationRecord]) -> Result<&'a str> {
    stations
        .iter()
        .map(|s| {
            let d = haversine_km(city.latitude, city.longitude, s.latitude, s.longitude);
            (d, s.station_id.as_str())
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id)
        .ok_or_else(|| Error::invalid("no stations to associate with"))
}
