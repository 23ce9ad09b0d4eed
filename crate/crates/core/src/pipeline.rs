//! Per-origin data preparation shared by the GP and the baselines.
//!
//! Everything here reads a city's history through [`CityHistory`] and only
//! touches weeks up to the training end it is given, so a forecast origin can
//! never see the weeks it is asked to predict.

use serde::{Deserialize, Serialize};

use crate::data::{CityPanel, Climate, WeeklySeries};
use crate::error::{Error, Result};
use crate::kernels::{KernelInput, N_COVARIATES};
use crate::preprocess::{
    log_transform, remove_additive_outliers, select_lag, CovariateMatrix, TransformState,
    DEFAULT_CRITICAL_VALUE, MAX_LAG, MIN_LAG, MIN_LENGTH,
};

/// Read access to one city's weekly incidence and weather.
///
/// Implementations may track which weeks are read; `begin_origin` marks the
/// start of work on a new forecast target.
pub trait CityHistory: Sync {
    fn city_id(&self) -> &str;
    fn first_week(&self) -> u32;
    /// Last week with both incidence and weather.
    fn last_week(&self) -> u32;
    fn dir(&self, week: u32) -> f64;
    fn climate(&self, week: u32) -> Climate;
    /// Observed incidence, used only to score a forecast after it is made.
    fn actual_dir(&self, week: u32) -> Option<f64>;
    fn begin_origin(&self, _target_week: u32) {}
}

impl CityHistory for CityPanel {
    fn city_id(&self) -> &str {
        &self.city.city_id
    }

    fn first_week(&self) -> u32 {
        self.dir.start_week
    }

    fn last_week(&self) -> u32 {
        self.dir.end_week()
    }

    fn dir(&self, week: u32) -> f64 {
        self.dir.get(week).expect("week inside the panel")
    }

    fn climate(&self, week: u32) -> Climate {
        self.climate[(week - self.dir.start_week) as usize]
    }

    fn actual_dir(&self, week: u32) -> Option<f64> {
        self.dir.get(week)
    }
}

/// Which response the lag correlations are computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LagTarget {
    /// `ln(1 + DIR)`, the scale the models work on.
    #[default]
    Log,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub remove_outliers: bool,
    pub outlier_critical_value: f64,
    pub lag_target: LagTarget,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            remove_outliers: true,
            outlier_critical_value: DEFAULT_CRITICAL_VALUE,
            lag_target: LagTarget::Log,
        }
    }
}

/// Model-ready training data for one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedOrigin {
    /// GP inputs: week index plus standardized lagged covariates.
    pub inputs: Vec<KernelInput>,
    /// Centered `ln(1 + DIR)` aligned with `inputs`.
    pub targets: Vec<f64>,
    /// Uncentered log response over the training rows.
    pub log_response: WeeklySeries,
    /// Standardized lagged covariates over the training rows.
    pub covariates: CovariateMatrix,
    pub transform: TransformState,
}

impl PreparedOrigin {
    pub fn first_training_week(&self) -> u32 {
        self.log_response.start_week
    }
}

/// Incidence through `training_end`, outlier-cleaned when configured.
pub fn cleaned_dir(
    history: &dyn CityHistory,
    training_end: u32,
    config: &PipelineConfig,
) -> Result<(WeeklySeries, Vec<u32>)> {
    let first = history.first_week();
    if training_end < first || training_end > history.last_week() {
        return Err(Error::invalid(format!(
            "training end {training_end} outside the observed weeks {first}..={}",
            history.last_week()
        )));
    }
    let raw = WeeklySeries::new(
        history.city_id(),
        first,
        (first..=training_end).map(|w| history.dir(w)).collect(),
    )?;
    if config.remove_outliers && raw.len() >= MIN_LENGTH {
        let report = remove_additive_outliers(&raw, config.outlier_critical_value)?;
        Ok((report.series, report.flagged_weeks))
    } else {
        Ok((raw, Vec::new()))
    }
}

fn raw_climate_column(
    history: &dyn CityHistory,
    d: usize,
    first: u32,
    last: u32,
) -> Result<WeeklySeries> {
    WeeklySeries::new(
        history.city_id(),
        first,
        (first..=last).map(|w| history.climate(w)[d]).collect(),
    )
}

/// Preprocesses weeks up to `training_end`. Lags are selected from the same
/// window when `lags` is `None`.
pub fn prepare_origin(
    history: &dyn CityHistory,
    training_end: u32,
    lags: Option<[u32; N_COVARIATES]>,
    config: &PipelineConfig,
) -> Result<PreparedOrigin> {
    let first = history.first_week();
    let (clean, outlier_weeks) = cleaned_dir(history, training_end, config)?;
    let log = log_transform(&clean)?;

    let lags = match lags {
        Some(l) => {
            if l.iter().any(|v| !(MIN_LAG..=MAX_LAG).contains(v)) {
                return Err(Error::invalid(format!(
                    "lags {l:?} outside {MIN_LAG}..={MAX_LAG}"
                )));
            }
            l
        }
        None => {
            let target = match config.lag_target {
                LagTarget::Log => &log,
                LagTarget::Raw => &clean,
            };
            let mut out = [0; N_COVARIATES];
            for (d, lag) in out.iter_mut().enumerate() {
                let column = raw_climate_column(history, d, first, training_end)?;
                *lag = select_lag(&column, target, training_end)?;
            }
            out
        }
    };

    let row_start = first + lags.iter().max().copied().unwrap_or(0);
    if row_start > training_end {
        return Err(Error::invalid("no training rows after applying lags"));
    }
    let weeks: Vec<u32> = (row_start..=training_end).collect();
    let raw_rows: Vec<Climate> = weeks
        .iter()
        .map(|&w| std::array::from_fn(|d| history.climate(w - lags[d])[d]))
        .collect();

    let n = weeks.len() as f64;
    let mut means = [0.0; N_COVARIATES];
    let mut stds = [0.0; N_COVARIATES];
    for d in 0..N_COVARIATES {
        let m = raw_rows.iter().map(|r| r[d]).sum::<f64>() / n;
        let v = raw_rows.iter().map(|r| (r[d] - m).powi(2)).sum::<f64>() / n;
        if !(v.sqrt() > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::invalid(format!(
                "covariate {d} is constant over the training window"
            )));
        }
        means[d] = m;
        stds[d] = v.sqrt();
    }

    let log_values: Vec<f64> = weeks.iter().map(|w| log.get(*w).unwrap()).collect();
    let response_mean = log_values.iter().sum::<f64>() / n;
    let transform = TransformState {
        training_end,
        response_mean,
        covariate_means: means,
        covariate_stds: stds,
        lags,
        outlier_weeks,
    };
    let rows: Vec<[f64; N_COVARIATES]> =
        raw_rows.iter().map(|r| transform.standardize(r)).collect();
    let inputs = weeks
        .iter()
        .zip(&rows)
        .map(|(w, r)| KernelInput::new(*w as f64, *r))
        .collect::<Result<Vec<_>>>()?;

    Ok(PreparedOrigin {
        inputs,
        targets: log_values.iter().map(|v| v - response_mean).collect(),
        log_response: WeeklySeries::new(history.city_id(), row_start, log_values)?,
        covariates: CovariateMatrix {
            start_week: row_start,
            rows,
        },
        transform,
    })
}

/// Standardized lagged covariates for `target_week` under a fitted transform.
pub fn query_covariates(
    history: &dyn CityHistory,
    transform: &TransformState,
    target_week: u32,
) -> Result<[f64; N_COVARIATES]> {
    let mut raw = [0.0; N_COVARIATES];
    for (d, slot) in raw.iter_mut().enumerate() {
        let week = target_week
            .checked_sub(transform.lags[d])
            .filter(|w| *w >= history.first_week() && *w <= history.last_week())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "no weather for week {target_week} minus lag {}",
                    transform.lags[d]
                ))
            })?;
        *slot = history.climate(week)[d];
    }
    Ok(transform.standardize(&raw))
}

pub fn query_input(
    history: &dyn CityHistory,
    transform: &TransformState,
    target_week: u32,
) -> Result<KernelInput> {
    KernelInput::new(
        target_week as f64,
        query_covariates(history, transform, target_week)?,
    )
}
