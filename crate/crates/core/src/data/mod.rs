//! Input data model: cities, weekly case series, weather stations and the
//! city-to-station association.

mod geo;
mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use geo::{haversine_km, nearest_station, EARTH_RADIUS_KM};
pub use io::{load_dataset, write_dataset, DatasetPaths};

/// Cases per this many inhabitants define the incidence rate.
pub const DIR_SCALE: f64 = 100_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    North,
    Northeast,
    Southeast,
    South,
    CenterWest,
    Other,
}

impl Region {
    pub const ALL: [Region; 6] = [
        Region::North,
        Region::Northeast,
        Region::Southeast,
        Region::South,
        Region::CenterWest,
        Region::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::North => "North",
            Region::Northeast => "Northeast",
            Region::Southeast => "Southeast",
            Region::South => "South",
            Region::CenterWest => "CenterWest",
            Region::Other => "Other",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .iter()
            .copied()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown region `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityRecord {
    pub city_id: String,
    pub name: String,
    pub region: Region,
    pub latitude: f64,
    pub longitude: f64,
    /// Inhabitants; constant over the whole study window.
    pub population: u64,
}

impl CityRecord {
    pub fn validate(&self) -> Result<()> {
        if self.population < 1 {
            return Err(Error::invalid(format!(
                "city {}: population must be at least 1",
                self.city_id
            )));
        }
        validate_coordinates(&self.city_id, self.latitude, self.longitude)
    }
}

pub(crate) fn validate_coordinates(id: &str, lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::invalid(format!(
            "{id}: coordinates ({lat}, {lon}) out of range"
        )));
    }
    Ok(())
}

/// Equally spaced weekly observations. `values[i]` belongs to week `start_week + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    pub city_id: String,
    pub start_week: u32,
    pub values: Vec<f64>,
}

impl WeeklySeries {
    pub fn new(city_id: impl Into<String>, start_week: u32, values: Vec<f64>) -> Result<Self> {
        if start_week < 1 {
            return Err(Error::invalid("weeks are 1-based"));
        }
        Ok(WeeklySeries {
            city_id: city_id.into(),
            start_week,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last covered week, or `start_week - 1` for an empty series.
    pub fn end_week(&self) -> u32 {
        self.start_week + self.values.len() as u32 - 1
    }

    pub fn week_of(&self, index: usize) -> u32 {
        self.start_week + index as u32
    }

    pub fn index_of(&self, week: u32) -> Option<usize> {
        if week < self.start_week {
            return None;
        }
        let i = (week - self.start_week) as usize;
        (i < self.values.len()).then_some(i)
    }

    pub fn get(&self, week: u32) -> Option<f64> {
        self.index_of(week).map(|i| self.values[i])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> WeeklySeries {
        WeeklySeries {
            city_id: self.city_id.clone(),
            start_week: self.start_week,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy restricted to weeks `start_week..=last_week`.
    pub fn truncated(&self, last_week: u32) -> WeeklySeries {
        let keep = (last_week + 1).saturating_sub(self.start_week) as usize;
        WeeklySeries {
            city_id: self.city_id.clone(),
            start_week: self.start_week,
            values: self.values[..keep.min(self.values.len())].to_vec(),
        }
    }
}

/// Converts weekly case counts into the incidence rate per 100,000 inhabitants.
pub fn compute_dir(cases: &WeeklySeries, population: u64) -> Result<WeeklySeries> {
    if population < 1 {
        return Err(Error::invalid("population must be positive"));
    }
    if let Some(v) = cases
        .values
        .iter()
        .find(|v| !(**v >= 0.0) || !v.is_finite())
    {
        return Err(Error::invalid(format!(
            "city {}: case counts must be finite and nonnegative, got {v}",
            cases.city_id
        )));
    }
    let scale = DIR_SCALE / population as f64;
    Ok(cases.map(|c| c * scale))
}

/// Weekly weather triple; column order is fixed as (rain, temperature, humidity).
pub type Climate = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub start_week: u32,
    /// `climate[i]` belongs to week `start_week + i`.
    pub climate: Vec<Climate>,
}

impl StationRecord {
    pub fn climate_at(&self, week: u32) -> Option<Climate> {
        week.checked_sub(self.start_week)
            .and_then(|i| self.climate.get(i as usize).copied())
    }
}

/// A validated, week-aligned collection of cities and stations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Sorted by `city_id`.
    pub cities: Vec<CityRecord>,
    /// Raw weekly case counts keyed by city.
    pub cases: BTreeMap<String, WeeklySeries>,
    /// Sorted by `station_id`; every station covers `start_week..=end_week`.
    pub stations: Vec<StationRecord>,
    /// Nearest station for each city.
    pub assignments: BTreeMap<String, String>,
    pub start_week: u32,
    pub end_week: u32,
}

/// Everything the forecasting pipeline needs for one city.
#[derive(Debug, Clone, PartialEq)]
pub struct CityPanel {
    pub city: CityRecord,
    pub station_id: String,
    pub dir: WeeklySeries,
    /// Aligned with `dir`: `climate[i]` is the weather of week `dir.week_of(i)`.
    pub climate: Vec<Climate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationAssignment {
    pub city_id: String,
    pub station_id: String,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub cities: usize,
    pub city_ids: Vec<String>,
    pub stations: usize,
    pub start_week: u32,
    pub end_week: u32,
    pub weeks: u32,
    pub assignments: Vec<StationAssignment>,
}

impl Dataset {
    pub fn city(&self, city_id: &str) -> Option<&CityRecord> {
        self.cities.iter().find(|c| c.city_id == city_id)
    }

    pub fn station(&self, station_id: &str) -> Option<&StationRecord> {
        self.stations.iter().find(|s| s.station_id == station_id)
    }

    pub fn weeks(&self) -> u32 {
        self.end_week + 1 - self.start_week
    }

    pub fn panel(&self, city_id: &str) -> Result<CityPanel> {
        let city = self
            .city(city_id)
            .ok_or_else(|| Error::invalid(format!("unknown city `{city_id}`")))?;
        let cases = &self.cases[city_id];
        let station_id = &self.assignments[city_id];
        let station = self
            .station(station_id)
            .ok_or_else(|| Error::invalid(format!("unknown station `{station_id}`")))?;
        let climate = (self.start_week..=self.end_week)
            .map(|w| {
                station.climate_at(w).ok_or_else(|| {
                    Error::invalid(format!("station {station_id} has no climate for week {w}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CityPanel {
            city: city.clone(),
            station_id: station_id.clone(),
            dir: compute_dir(cases, city.population)?,
            climate,
        })
    }

    pub fn panels(&self) -> Result<Vec<CityPanel>> {
        self.cities.iter().map(|c| self.panel(&c.city_id)).collect()
    }

    /// Keeps only cities with at least `min_population` inhabitants.
    pub fn with_min_population(&self, min_population: u64) -> Dataset {
        let mut out = self.clone();
        out.cities.retain(|c| c.population >= min_population);
        let keep: Vec<String> = out.cities.iter().map(|c| c.city_id.clone()).collect();
        out.cases.retain(|k, _| keep.contains(k));
        out.assignments.retain(|k, _| keep.contains(k));
        out
    }

    pub fn summary(&self) -> DatasetSummary {
        let assignments = self
            .cities
            .iter()
            .map(|c| {
                let station_id = self.assignments[&c.city_id].clone();
                let s = self.station(&station_id).expect("assigned station exists");
                StationAssignment {
                    city_id: c.city_id.clone(),
                    distance_km: haversine_km(c.latitude, c.longitude, s.latitude, s.longitude),
                    station_id,
                }
            })
            .collect();
        DatasetSummary {
            cities: self.cities.len(),
            city_ids: self.cities.iter().map(|c| c.city_id.clone()).collect(),
            stations: self.stations.len(),
            start_week: self.start_week,
            end_week: self.end_week,
            weeks: self.weeks(),
            assignments,
        }
    }
}
