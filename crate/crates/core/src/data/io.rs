//! CSV bundle reader and writer.
//!
//! All files are UTF-8, comma separated, with a header row:
//!
//! ```text
//! cases.csv       city_id,week,cases
//! population.csv  city_id,population
//! cities.csv      city_id,name,region,lat,lon
//! stations.csv    station_id,lat,lon
//! climate.csv     station_id,week,rainfall_mm,temperature_c,humidity_pct
//! ```
//!
//! Climate cells may be left empty; such gaps are filled by linear
//! interpolation (or the nearest value at the ends of the window). A missing
//! climate *row* is a contiguity error.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{
    nearest_station, validate_coordinates, CityRecord, Climate, Dataset, Region, StationRecord,
    WeeklySeries,
};

pub const CASES_HEADER: [&str; 3] = ["city_id", "week", "cases"];
pub const POPULATION_HEADER: [&str; 2] = ["city_id", "population"];
pub const CITIES_HEADER: [&str; 5] = ["city_id", "name", "region", "lat", "lon"];
pub const STATIONS_HEADER: [&str; 3] = ["station_id", "lat", "lon"];
pub const CLIMATE_HEADER: [&str; 5] = [
    "station_id",
    "week",
    "rainfall_mm",
    "temperature_c",
    "humidity_pct",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub cases: PathBuf,
    pub population: PathBuf,
    pub climate: PathBuf,
    pub stations: PathBuf,
    pub cities: PathBuf,
}

impl DatasetPaths {
    /// Standard file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        DatasetPaths {
            cases: d.join("cases.csv"),
            population: d.join("population.csv"),
            climate: d.join("climate.csv"),
            stations: d.join("stations.csv"),
            cities: d.join("cities.csv"),
        }
    }
}

struct Rows {
    path: PathBuf,
    reader: csv::Reader<File>,
}

struct Row {
    line: u64,
    fields: csv::StringRecord,
}

impl Rows {
    fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let found = reader
            .headers()
            .map_err(|e| schema(path, 1, e.to_string()))?
            .clone();
        if found.iter().ne(header.iter().copied()) {
            return Err(schema(
                path,
                1,
                format!(
                    "expected header `{}`, found `{}`",
                    header.join(","),
                    found.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        Ok(Rows {
            path: path.to_path_buf(),
            reader,
        })
    }

    fn collect(mut self, width: usize) -> Result<(PathBuf, Vec<Row>)> {
        let mut rows = Vec::new();
        for rec in self.reader.records() {
            let fields = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                schema(&self.path, line, e.to_string())
            })?;
            let line = fields.position().map_or(0, |p| p.line());
            if fields.len() != width {
                return Err(schema(
                    &self.path,
                    line,
                    format!("expected {width} columns, found {}", fields.len()),
                ));
            }
            rows.push(Row { line, fields });
        }
        Ok((self.path, rows))
    }
}

fn schema(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse<T: FromStr>(path: &Path, row: &Row, col: usize, what: &str) -> Result<T> {
    let raw = &row.fields[col];
    raw.parse()
        .map_err(|_| schema(path, row.line, format!("{what}: cannot parse `{raw}`")))
}

fn parse_week(path: &Path, row: &Row) -> Result<u32> {
    let w: u32 = parse(path, row, 1, "week")?;
    if w < 1 {
        return Err(schema(path, row.line, "week must be >= 1"));
    }
    Ok(w)
}

fn parse_coord(path: &Path, row: &Row, id: &str) -> Result<(f64, f64)> {
    let lat = parse(path, row, row.fields.len() - 2, "lat")?;
    let lon = parse(path, row, row.fields.len() - 1, "lon")?;
    validate_coordinates(id, lat, lon).map_err(|e| schema(path, row.line, e.to_string()))?;
    Ok((lat, lon))
}

/// Sorted weeks must form a contiguous run; returns the first week.
fn check_contiguous<T>(path: &Path, key: &str, weeks: &BTreeMap<u32, (u64, T)>) -> Result<u32> {
    let mut iter = weeks.iter();
    let (&first, _) = iter
        .next()
        .ok_or_else(|| schema(path, 0, format!("{key}: no rows")))?;
    for (expected, (&w, (line, _))) in (first + 1..).zip(iter) {
        if w != expected {
            return Err(schema(
                path,
                *line,
                format!("{key}: weeks not contiguous, missing week {expected}"),
            ));
        }
    }
    Ok(first)
}

/// Fills `None` gaps by linear interpolation between neighbours; leading and
/// trailing gaps take the nearest available value.
fn fill_gaps(values: &mut [Option<f64>]) -> bool {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return false;
    };
    let (head, tail) = (values[first], values[last]);
    values[..first].fill(head);
    values[last + 1..].fill(tail);
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (values[a].unwrap(), values[b].unwrap());
        for (k, v) in values[a + 1..b].iter_mut().enumerate() {
            let t = (k + 1) as f64 / (b - a) as f64;
            *v = Some(va + t * (vb - va));
        }
    }
    true
}

pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    // cities
    let (path, rows) = Rows::open(&paths.cities, &CITIES_HEADER)?.collect(CITIES_HEADER.len())?;
    let mut cities: BTreeMap<String, (u64, CityRecord)> = BTreeMap::new();
    for row in &rows {
        let id = row.fields[0].to_string();
        let region =
            Region::from_str(&row.fields[2]).map_err(|e| schema(&path, row.line, e.to_string()))?;
        let (latitude, longitude) = parse_coord(&path, row, &id)?;
        let rec = CityRecord {
            city_id: id.clone(),
            name: row.fields[1].to_string(),
            region,
            latitude,
            longitude,
            population: 0,
        };
        if cities.insert(id.clone(), (row.line, rec)).is_some() {
            return Err(schema(&path, row.line, format!("duplicate city `{id}`")));
        }
    }

    // population
    let (ppath, rows) =
        Rows::open(&paths.population, &POPULATION_HEADER)?.collect(POPULATION_HEADER.len())?;
    let mut seen = BTreeMap::new();
    for row in &rows {
        let id = &row.fields[0];
        let pop: u64 = parse(&ppath, row, 1, "population")?;
        if pop < 1 {
            return Err(schema(&ppath, row.line, "population must be >= 1"));
        }
        let Some((_, rec)) = cities.get_mut(id) else {
            return Err(schema(&ppath, row.line, format!("unknown city `{id}`")));
        };
        if seen.insert(id.to_string(), ()).is_some() {
            return Err(schema(
                &ppath,
                row.line,
                format!("duplicate population for `{id}`"),
            ));
        }
        rec.population = pop;
    }
    if let Some((line, rec)) = cities.values().find(|(_, c)| c.population == 0) {
        return Err(schema(
            &path,
            *line,
            format!("city `{}` has no population entry", rec.city_id),
        ));
    }

    // cases
    let (cpath, rows) = Rows::open(&paths.cases, &CASES_HEADER)?.collect(CASES_HEADER.len())?;
    let mut by_city: BTreeMap<String, BTreeMap<u32, (u64, f64)>> = BTreeMap::new();
    for row in &rows {
        let id = &row.fields[0];
        if !cities.contains_key(id) {
            return Err(schema(&cpath, row.line, format!("unknown city `{id}`")));
        }
        let week = parse_week(&cpath, row)?;
        let count: u64 = parse(&cpath, row, 2, "cases")?;
        match by_city.entry(id.to_string()).or_default().entry(week) {
            Entry::Occupied(_) => {
                return Err(schema(
                    &cpath,
                    row.line,
                    format!("duplicate row for city `{id}`, week {week}"),
                ))
            }
            Entry::Vacant(v) => {
                v.insert((row.line, count as f64));
            }
        }
    }
    let mut cases = BTreeMap::new();
    let mut window: Option<(u32, u32)> = None;
    for (id, (line, _)) in &cities {
        let Some(weeks) = by_city.get(id) else {
            return Err(schema(
                &path,
                *line,
                format!("city `{id}` has no case rows"),
            ));
        };
        let start = check_contiguous(&cpath, id, weeks)?;
        let end = start + weeks.len() as u32 - 1;
        match window {
            None => window = Some((start, end)),
            Some(w) if w != (start, end) => {
                return Err(schema(
                    &cpath,
                    0,
                    format!(
                        "city `{id}` covers weeks {start}..={end}, others cover {}..={}",
                        w.0, w.1
                    ),
                ))
            }
            _ => {}
        }
        let values = weeks.values().map(|(_, v)| *v).collect();
        cases.insert(id.clone(), WeeklySeries::new(id.clone(), start, values)?);
    }
    let (start_week, end_week) = window.ok_or_else(|| schema(&path, 0, "no cities in dataset"))?;

    // stations
    let (spath, rows) =
        Rows::open(&paths.stations, &STATIONS_HEADER)?.collect(STATIONS_HEADER.len())?;
    let mut stations: BTreeMap<String, (u64, f64, f64)> = BTreeMap::new();
    for row in &rows {
        let id = row.fields[0].to_string();
        let (lat, lon) = parse_coord(&spath, row, &id)?;
        if stations.insert(id.clone(), (row.line, lat, lon)).is_some() {
            return Err(schema(
                &spath,
                row.line,
                format!("duplicate station `{id}`"),
            ));
        }
    }

    // climate
    let (kpath, rows) =
        Rows::open(&paths.climate, &CLIMATE_HEADER)?.collect(CLIMATE_HEADER.len())?;
    type ClimateCells = [Option<f64>; 3];
    let mut by_station: BTreeMap<String, BTreeMap<u32, (u64, ClimateCells)>> = BTreeMap::new();
    for row in &rows {
        let id = &row.fields[0];
        if !stations.contains_key(id) {
            return Err(schema(&kpath, row.line, format!("unknown station `{id}`")));
        }
        let week = parse_week(&kpath, row)?;
        let mut cells = [None; 3];
        for (k, cell) in cells.iter_mut().enumerate() {
            if !row.fields[2 + k].is_empty() {
                let v: f64 = parse(&kpath, row, 2 + k, CLIMATE_HEADER[2 + k])?;
                if !v.is_finite() {
                    return Err(schema(&kpath, row.line, "non-finite climate value"));
                }
                *cell = Some(v);
            }
        }
        match by_station.entry(id.to_string()).or_default().entry(week) {
            Entry::Occupied(_) => {
                return Err(schema(
                    &kpath,
                    row.line,
                    format!("duplicate row for station `{id}`, week {week}"),
                ))
            }
            Entry::Vacant(v) => {
                v.insert((row.line, cells));
            }
        }
    }
    let mut station_records = Vec::with_capacity(stations.len());
    for (id, (line, lat, lon)) in &stations {
        let Some(weeks) = by_station.get(id) else {
            return Err(schema(
                &spath,
                *line,
                format!("station `{id}` has no climate rows"),
            ));
        };
        let first = check_contiguous(&kpath, id, weeks)?;
        let last = first + weeks.len() as u32 - 1;
        if first > start_week || last < end_week {
            return Err(schema(
                &kpath,
                0,
                format!(
                    "station `{id}`: climate covers weeks {first}..={last}, \
                     dataset needs {start_week}..={end_week}"
                ),
            ));
        }
        let in_window: Vec<&ClimateCells> = weeks
            .range(start_week..=end_week)
            .map(|(_, (_, c))| c)
            .collect();
        let mut columns: [Vec<Option<f64>>; 3] =
            std::array::from_fn(|k| in_window.iter().map(|c| c[k]).collect());
        for (k, col) in columns.iter_mut().enumerate() {
            if !fill_gaps(col) {
                return Err(schema(
                    &kpath,
                    0,
                    format!(
                        "station `{id}`: column {} is entirely empty",
                        CLIMATE_HEADER[2 + k]
                    ),
                ));
            }
        }
        let climate = (0..in_window.len())
            .map(|i| std::array::from_fn(|k| columns[k][i].unwrap()))
            .collect();
        station_records.push(StationRecord {
            station_id: id.clone(),
            latitude: *lat,
            longitude: *lon,
            start_week,
            climate,
        });
    }

    let cities: Vec<CityRecord> = cities.into_values().map(|(_, c)| c).collect();
    let mut assignments = BTreeMap::new();
    for c in &cities {
        let s =
            nearest_station(c, &station_records).map_err(|e| schema(&spath, 0, e.to_string()))?;
        assignments.insert(c.city_id.clone(), s.to_string());
    }

    Ok(Dataset {
        cities,
        cases,
        stations: station_records,
        assignments,
        start_week,
        end_week,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, header: &[&str], lines: impl Iterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for line in lines {
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes the five-file CSV bundle that [`load_dataset`] reads back.
pub fn write_dataset(dataset: &Dataset, paths: &DatasetPaths) -> Result<()> {
    for series in dataset.cases.values() {
        if let Some(v) = series.values.iter().find(|v| v.fract() != 0.0 || **v < 0.0) {
            return Err(Error::invalid(format!(
                "city {}: case count {v} is not a nonnegative integer",
                series.city_id
            )));
        }
    }
    write_lines(
        &paths.cities,
        &CITIES_HEADER,
        dataset.cities.iter().map(|c| {
            format!(
                "{},{},{},{},{}",
                c.city_id, c.name, c.region, c.latitude, c.longitude
            )
        }),
    )?;
    write_lines(
        &paths.population,
        &POPULATION_HEADER,
        dataset
            .cities
            .iter()
            .map(|c| format!("{},{}", c.city_id, c.population)),
    )?;
    write_lines(
        &paths.cases,
        &CASES_HEADER,
        dataset.cases.values().flat_map(|s| {
            s.values
                .iter()
                .enumerate()
                .map(move |(i, v)| format!("{},{},{}", s.city_id, s.week_of(i), *v as u64))
        }),
    )?;
    write_lines(
        &paths.stations,
        &STATIONS_HEADER,
        dataset
            .stations
            .iter()
            .map(|s| format!("{},{},{}", s.station_id, s.latitude, s.longitude)),
    )?;
    write_lines(
        &paths.climate,
        &CLIMATE_HEADER,
        dataset.stations.iter().flat_map(|s| {
            s.climate
                .iter()
                .enumerate()
                .map(move |(i, c): (usize, &Climate)| {
                    format!(
                        "{},{},{},{},{}",
                        s.station_id,
                        s.start_week + i as u32,
                        c[0],
                        c[1],
                        c[2]
                    )
                })
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_filling() {
        let mut v = vec![None, Some(1.0), None, None, Some(4.0), None];
        assert!(fill_gaps(&mut v));
        let got: Vec<f64> = v.into_iter().map(Option::unwrap).collect();
        assert_eq!(got, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(!fill_gaps(&mut [None, None]));
    }
}
