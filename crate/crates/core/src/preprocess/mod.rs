//! Turning raw incidence and weather into model-ready targets and covariates.
//!
//! Every statistic here is computed from weeks up to a `training_end` week
//! only and then applied unchanged to later weeks.

mod outliers;

use serde::{Deserialize, Serialize};

use crate::data::{Climate, WeeklySeries};
use crate::error::{Error, Result};
use crate::evaluation::pearson;
use crate::kernels::N_COVARIATES;

pub use outliers::{
    remove_additive_outliers, OutlierReport, DEFAULT_CRITICAL_VALUE, MAX_AR_ORDER, MAX_ITERATIONS,
    MIN_LENGTH,
};

pub const MIN_LAG: u32 = 4;
pub const MAX_LAG: u32 = 26;
/// Training weeks required beyond the largest lag for lag selection.
pub const LAG_SELECTION_MARGIN: u32 = 10;

/// Correlations closer than this count as tied.
const LAG_TIE_TOLERANCE: f64 = 1e-12;

pub const COVARIATE_NAMES: [&str; N_COVARIATES] = ["rainfall", "temperature", "humidity"];

/// Everything learned from the training window that is needed to map new
/// weeks into model space and predictions back out of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformState {
    pub training_end: u32,
    /// Mean of `ln(1 + DIR)` over the training rows.
    pub response_mean: f64,
    pub covariate_means: [f64; N_COVARIATES],
    /// Population (1/N) standard deviations; always positive.
    pub covariate_stds: [f64; N_COVARIATES],
    /// Weeks each covariate is shifted forward; within `[MIN_LAG, MAX_LAG]`.
    pub lags: [u32; N_COVARIATES],
    pub outlier_weeks: Vec<u32>,
}

impl TransformState {
    pub fn standardize(&self, raw: &Climate) -> [f64; N_COVARIATES] {
        std::array::from_fn(|d| (raw[d] - self.covariate_means[d]) / self.covariate_stds[d])
    }
}

/// Week-indexed covariate rows in (rain, temperature, humidity) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    pub start_week: u32,
    pub rows: Vec<[f64; N_COVARIATES]>,
}

impl CovariateMatrix {
    pub fn week_of(&self, index: usize) -> u32 {
        self.start_week + index as u32
    }

    pub fn get(&self, week: u32) -> Option<&[f64; N_COVARIATES]> {
        week.checked_sub(self.start_week)
            .and_then(|i| self.rows.get(i as usize))
    }

    pub fn column(&self, d: usize) -> WeeklySeries {
        WeeklySeries {
            city_id: String::new(),
            start_week: self.start_week,
            values: self.rows.iter().map(|r| r[d]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateStats {
    pub means: [f64; N_COVARIATES],
    pub stds: [f64; N_COVARIATES],
}

/// `ln(1 + y)`; zero counts are allowed.
pub fn log_transform(series: &WeeklySeries) -> Result<WeeklySeries> {
    if let Some(v) = series.values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!(
            "log transform needs nonnegative values, got {v}"
        )));
    }
    Ok(series.map(f64::ln_1p))
}

pub fn inverse_log_transform(series: &WeeklySeries) -> WeeklySeries {
    series.map(f64::exp_m1)
}

/// Subtracts the mean of weeks `start_week..=training_end`.
pub fn center_response(series: &WeeklySeries, training_end: u32) -> Result<(WeeklySeries, f64)> {
    if training_end < series.start_week || series.is_empty() {
        return Err(Error::invalid("empty training window"));
    }
    let n = ((training_end - series.start_week + 1) as usize).min(series.len());
    let mean = series.values[..n].iter().sum::<f64>() / n as f64;
    Ok((series.map(|v| v - mean), mean))
}

pub fn uncenter_response(series: &WeeklySeries, mean: f64) -> WeeklySeries {
    series.map(|v| v + mean)
}

fn mean_and_population_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-column `(x - mean) / std` with statistics from rows up to `training_end`.
pub fn standardize_covariates(
    cov: &CovariateMatrix,
    training_end: u32,
) -> Result<(CovariateMatrix, CovariateStats)> {
    if training_end < cov.start_week || cov.rows.is_empty() {
        return Err(Error::invalid("empty training window for covariates"));
    }
    let n = ((training_end - cov.start_week + 1) as usize).min(cov.rows.len());
    let mut means = [0.0; N_COVARIATES];
    let mut stds = [0.0; N_COVARIATES];
    for d in 0..N_COVARIATES {
        let col: Vec<f64> = cov.rows[..n].iter().map(|r| r[d]).collect();
        let (m, s) = mean_and_population_std(&col);
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::invalid(format!(
                "covariate {} is constant over the training window",
                COVARIATE_NAMES[d]
            )));
        }
        means[d] = m;
        stds[d] = s;
    }
    let rows = cov
        .rows
        .iter()
        .map(|r| std::array::from_fn(|d| (r[d] - means[d]) / stds[d]))
        .collect();
    Ok((
        CovariateMatrix {
            start_week: cov.start_week,
            rows,
        },
        CovariateStats { means, stds },
    ))
}

/// Lag in `[MIN_LAG, MAX_LAG]` maximizing `|corr(covariate[t - lag], target[t])|`
/// over training weeks. Ties go to the smaller lag.
pub fn select_lag(
    covariate: &WeeklySeries,
    target: &WeeklySeries,
    training_end: u32,
) -> Result<u32> {
    let first = target.start_week.max(covariate.start_week);
    if training_end < first || training_end - first < MAX_LAG + LAG_SELECTION_MARGIN {
        return Err(Error::invalid(format!(
            "lag selection needs more than {} training weeks",
            MAX_LAG + LAG_SELECTION_MARGIN
        )));
    }
    let mut best: Option<(f64, u32)> = None;
    for lag in MIN_LAG..=MAX_LAG {
        let lo = target.start_week.max(covariate.start_week + lag);
        let hi = training_end
            .min(target.end_week())
            .min(covariate.end_week() + lag);
        if hi < lo + 2 {
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=hi)
            .map(|t| (covariate.get(t - lag).unwrap(), target.get(t).unwrap()))
            .unzip();
        let Some(r) = pearson(&xs, &ys) else {
            return Err(Error::invalid(format!(
                "zero variance in lag-{lag} overlap window"
            )));
        };
        let score = r.abs();
        if best.is_none_or(|(b, _)| score > b + LAG_TIE_TOLERANCE) {
            best = Some((score, lag));
        }
    }
    best.map(|(_, lag)| lag)
        .ok_or_else(|| Error::invalid("no lag had enough overlapping weeks"))
}
