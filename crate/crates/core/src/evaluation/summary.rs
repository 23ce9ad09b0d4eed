//! Cross-city reduction of backtest reports and the forecast CSV format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CityRecord, Region};
use crate::error::{Error, Result};

use super::backtest::{BacktestReport, ForecastRow, ModelKind};
use super::metrics::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pearson,
    AucMedium,
    AucHigh,
    AucMean,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Pearson,
        Metric::AucMedium,
        Metric::AucHigh,
        Metric::AucMean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Pearson => "pearson",
            Metric::AucMedium => "auc_medium",
            Metric::AucHigh => "auc_high",
            Metric::AucMean => "auc_mean",
        }
    }

    pub fn of(self, report: &BacktestReport) -> Option<f64> {
        match self {
            Metric::Pearson => report.pearson,
            Metric::AucMedium => report.auc_medium,
            Metric::AucHigh => report.auc_high,
            Metric::AucMean => report.auc_mean,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// `None` for empty input.
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            n: v.len(),
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Distribution of one metric for one model over a group of cities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub model: ModelKind,
    /// `"All"` or a region name.
    pub region: String,
    pub metric: Metric,
    pub quartiles: Option<Quartiles>,
}

/// Head-to-head comparison over cities where both models have the metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadToHead {
    pub metric: Metric,
    pub model_a: ModelKind,
    pub model_b: ModelKind,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityMetrics {
    pub city_id: String,
    pub region: Region,
    pub model: ModelKind,
    pub forecasts: usize,
    pub missing: usize,
    pub pearson: Option<f64>,
    pub auc_medium: Option<f64>,
    pub auc_high: Option<f64>,
    pub auc_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub models: Vec<ModelKind>,
    pub cities: Vec<CityMetrics>,
    pub groups: Vec<GroupSummary>,
    pub head_to_head: Vec<HeadToHead>,
}

pub const ALL_REGIONS: &str = "All";

fn region_of(cities: &[CityRecord], city_id: &str) -> Region {
    cities
        .iter()
        .find(|c| c.city_id == city_id)
        .map_or(Region::Other, |c| c.region)
}

/// Wins of `a` over `b` on `metric`, matching reports by city.
pub fn head_to_head(
    a: &[&BacktestReport],
    b: &[&BacktestReport],
    metric: Metric,
) -> (usize, usize, usize) {
    let b_by_city: BTreeMap<&str, &BacktestReport> =
        b.iter().map(|r| (r.city_id.as_str(), *r)).collect();
    let (mut wa, mut wb, mut ties) = (0, 0, 0);
    for ra in a {
        let Some(rb) = b_by_city.get(ra.city_id.as_str()) else {
            continue;
        };
        let (Some(x), Some(y)) = (metric.of(ra), metric.of(rb)) else {
            continue;
        };
        if x > y {
            wa += 1;
        } else if y > x {
            wb += 1;
        } else {
            ties += 1;
        }
    }
    (wa, wb, ties)
}

/// Per-region and overall quartiles of every metric plus pairwise win
/// counts. The result does not depend on the order of `reports`.
pub fn aggregate_reports(reports: &[BacktestReport], cities: &[CityRecord]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to aggregate"));
    }
    let mut sorted: Vec<&BacktestReport> = reports.iter().collect();
    sorted.sort_by(|a, b| (a.model, &a.city_id).cmp(&(b.model, &b.city_id)));
    let mut models: Vec<ModelKind> = sorted.iter().map(|r| r.model).collect();
    models.dedup();

    let city_metrics = sorted
        .iter()
        .map(|r| CityMetrics {
            city_id: r.city_id.clone(),
            region: region_of(cities, &r.city_id),
            model: r.model,
            forecasts: r.forecasts(),
            missing: r.missing,
            pearson: r.pearson,
            auc_medium: r.auc_medium,
            auc_high: r.auc_high,
            auc_mean: r.auc_mean,
        })
        .collect::<Vec<_>>();

    let mut regions: Vec<Region> = city_metrics.iter().map(|c| c.region).collect();
    regions.sort();
    regions.dedup();

    let mut groups = Vec::new();
    for &model in &models {
        let of_model: Vec<&BacktestReport> = sorted
            .iter()
            .copied()
            .filter(|r| r.model == model)
            .collect();
        let mut push = |region: String, members: &[&BacktestReport]| {
            for metric in Metric::ALL {
                let values: Vec<f64> = members.iter().filter_map(|r| metric.of(r)).collect();
                groups.push(GroupSummary {
                    model,
                    region: region.clone(),
                    metric,
                    quartiles: Quartiles::of(&values),
                });
            }
        };
        push(ALL_REGIONS.to_string(), &of_model);
        for region in &regions {
            let members: Vec<&BacktestReport> = of_model
                .iter()
                .copied()
                .filter(|r| region_of(cities, &r.city_id) == *region)
                .collect();
            push(region.to_string(), &members);
        }
    }

    let mut h2h = Vec::new();
    for (i, &a) in models.iter().enumerate() {
        for &b in &models[i + 1..] {
            let ra: Vec<&BacktestReport> =
                sorted.iter().copied().filter(|r| r.model == a).collect();
            let rb: Vec<&BacktestReport> =
                sorted.iter().copied().filter(|r| r.model == b).collect();
            for metric in Metric::ALL {
                let (wins_a, wins_b, ties) = head_to_head(&ra, &rb, metric);
                h2h.push(HeadToHead {
                    metric,
                    model_a: a,
                    model_b: b,
                    wins_a,
                    wins_b,
                    ties,
                });
            }
        }
    }

    Ok(Summary {
        models,
        cities: city_metrics,
        groups,
        head_to_head: h2h,
    })
}

pub const FORECAST_HEADER: [&str; 7] = [
    "target_week",
    "actual_dir",
    "predicted_dir",
    "sd",
    "lower95",
    "upper95",
    "model",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes report rows in the stable forecast CSV schema; failed weeks have empty cells.
pub fn write_forecast_csv(path: &Path, report: &BacktestReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(FORECAST_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for r in &report.rows {
        w.write_record([
            r.target_week.to_string(),
            cell(r.actual_dir),
            cell(r.predicted_dir),
            cell(r.sd),
            cell(r.lower95),
            cell(r.upper95),
            report.model.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a forecast CSV back into its model and rows.
pub fn read_forecast_csv(path: &Path) -> Result<(ModelKind, Vec<ForecastRow>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(FORECAST_HEADER) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", FORECAST_HEADER.join(",")),
        });
    }
    let mut model = None;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Schema {
            path: path.to_path_buf(),
            line,
            message,
        };
        let num = |i: usize| -> Result<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| {
                bad(format!(
                    "column {} is not a number: `{s}`",
                    FORECAST_HEADER[i]
                ))
            })
        };
        let m: ModelKind = rec[6].parse().map_err(|e: Error| bad(e.to_string()))?;
        if model.is_some_and(|prev| prev != m) {
            return Err(bad("mixed models in one forecast file".into()));
        }
        model = Some(m);
        rows.push(ForecastRow {
            target_week: rec[0]
                .parse()
                .map_err(|_| bad(format!("bad target week `{}`", &rec[0])))?,
            actual_dir: num(1)?,
            predicted_dir: num(2)?,
            sd: num(3)?,
            lower95: num(4)?,
            upper95: num(5)?,
        });
    }
    let model = model.ok_or_else(|| Error::Schema {
        path: path.to_path_buf(),
        line: 1,
        message: "no forecast rows".into(),
    })?;
    Ok((model, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::ProtocolConfig;

    fn report(city: &str, model: ModelKind, pearson: f64) -> BacktestReport {
        let mut r = BacktestReport::from_rows(city, model, ProtocolConfig::default(), vec![]);
        r.pearson = Some(pearson);
        r
    }

    fn city(id: &str, region: Region) -> CityRecord {
        CityRecord {
            city_id: id.into(),
            name: id.into(),
            region,
            latitude: 0.0,
            longitude: 0.0,
            population: 1,
        }
    }

    fn group<'a>(
        s: &'a Summary,
        model: ModelKind,
        region: &str,
        metric: Metric,
    ) -> &'a GroupSummary {
        s.groups
            .iter()
            .find(|g| g.model == model && g.region == region && g.metric == metric)
            .unwrap()
    }

    #[test]
    fn single_city_quartiles_are_its_value() {
        let s = aggregate_reports(
            &[report("a", ModelKind::Gp, 0.7)],
            &[city("a", Region::South)],
        )
        .unwrap();
        let q = group(&s, ModelKind::Gp, ALL_REGIONS, Metric::Pearson)
            .quartiles
            .unwrap();
        assert_eq!(
            (q.min, q.q1, q.median, q.q3, q.max),
            (0.7, 0.7, 0.7, 0.7, 0.7)
        );
        assert!(group(&s, ModelKind::Gp, "South", Metric::AucHigh)
            .quartiles
            .is_none());
    }

    #[test]
    fn medians_match_sort_oracle() {
        let vals = [0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.8];
        let reports: Vec<_> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| report(&format!("c{i}"), ModelKind::Lm, *v))
            .collect();
        let s = aggregate_reports(&reports, &[]).unwrap();
        let q = group(&s, ModelKind::Lm, ALL_REGIONS, Metric::Pearson)
            .quartiles
            .unwrap();
        let mut sorted = vals.to_vec();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(q.median, sorted[3]);
        // 7 points: the quartiles fall exactly on the 2nd and 6th order statistics.
        assert_eq!(q.q1, (sorted[1] + sorted[2]) / 2.0);
        assert_eq!(q.q3, (sorted[4] + sorted[5]) / 2.0);
        // every city lacks metadata, so they land in Other
        assert_eq!(
            group(&s, ModelKind::Lm, "Other", Metric::Pearson).quartiles,
            Some(q)
        );
    }

    #[test]
    fn model_against_itself_is_all_ties() {
        let rs: Vec<_> = (0..4)
            .map(|i| report(&format!("c{i}"), ModelKind::Gp, i as f64 / 4.0))
            .collect();
        let refs: Vec<&BacktestReport> = rs.iter().collect();
        assert_eq!(head_to_head(&refs, &refs, Metric::Pearson), (0, 0, 4));
    }

    #[test]
    fn win_counts_and_order_independence() {
        let mut rs = vec![
            report("a", ModelKind::Gp, 0.9),
            report("a", ModelKind::Ar, 0.5),
            report("b", ModelKind::Gp, 0.4),
            report("b", ModelKind::Ar, 0.6),
            report("c", ModelKind::Gp, 0.8),
            report("c", ModelKind::Ar, 0.1),
        ];
        let cities = [
            city("a", Region::North),
            city("b", Region::South),
            city("c", Region::North),
        ];
        let s1 = aggregate_reports(&rs, &cities).unwrap();
        rs.reverse();
        let s2 = aggregate_reports(&rs, &cities).unwrap();
        assert_eq!(s1, s2);
        let h = s1
            .head_to_head
            .iter()
            .find(|h| h.metric == Metric::Pearson)
            .unwrap();
        assert_eq!(
            (h.model_a, h.model_b, h.wins_a, h.wins_b, h.ties),
            (ModelKind::Gp, ModelKind::Ar, 2, 1, 0)
        );
    }

    #[test]
    fn forecast_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let rows = vec![
            ForecastRow {
                target_week: 105,
                actual_dir: Some(12.5),
                predicted_dir: Some(0.1 + 0.2),
                sd: Some(0.25),
                lower95: Some(1.0 / 3.0),
                upper95: Some(40.0),
            },
            ForecastRow {
                target_week: 106,
                actual_dir: Some(3.0),
                predicted_dir: None,
                sd: None,
                lower95: None,
                upper95: None,
            },
        ];
        let r =
            BacktestReport::from_rows("a", ModelKind::Ar, ProtocolConfig::default(), rows.clone());
        write_forecast_csv(&path, &r).unwrap();
        let (model, back) = read_forecast_csv(&path).unwrap();
        assert_eq!(model, ModelKind::Ar);
        assert_eq!(back, rows);
    }
}
