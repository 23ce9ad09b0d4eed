//! Rolling-origin backtest: forecast every target week from data that ends
//! `horizon` weeks earlier.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    ar_fit, ar_forecast, ar_forecast_variance, lm_fit, lm_predict, LinearModelState,
};
use crate::error::{Error, Result};
use crate::gp::{PredictiveDistribution, TrainedGp};
use crate::hyperopt::{optimize, OptimizerConfig};
use crate::kernels::{KernelHyperparameters, N_COVARIATES};
use crate::pipeline::{
    cleaned_dir, prepare_origin, query_covariates, query_input, CityHistory, PipelineConfig,
};
use crate::preprocess::{log_transform, TransformState, LAG_SELECTION_MARGIN, MAX_LAG};

use super::metrics::{band_auc, pearson, HIGH_THRESHOLD, MEDIUM_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gp,
    Lm,
    Ar,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Gp, ModelKind::Lm, ModelKind::Ar];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gp => "gp",
            ModelKind::Lm => "lm",
            ModelKind::Ar => "ar",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gp" => Ok(ModelKind::Gp),
            "lm" => Ok(ModelKind::Lm),
            "ar" => Ok(ModelKind::Ar),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub horizon: u32,
    pub first_target: u32,
    /// Defaults to the last observed week.
    pub last_target: Option<u32>,
    /// Target weeks between hyperparameter and lag re-selections; 1 re-optimizes at every origin.
    pub refit_every: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            horizon: 4,
            first_target: 105,
            last_target: None,
            refit_every: 52,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.first_target <= self.horizon {
            return Err(Error::invalid("first target must come after the horizon"));
        }
        if self.refit_every < 1 {
            return Err(Error::invalid("refit interval must be at least 1"));
        }
        if let Some(last) = self.last_target {
            if last < self.first_target {
                return Err(Error::invalid("last target precedes first target"));
            }
        }
        Ok(())
    }

    /// Target weeks evaluated for a series ending at `last_week`.
    pub fn targets(&self, last_week: u32) -> std::ops::RangeInclusive<u32> {
        self.first_target..=self.last_target.unwrap_or(last_week)
    }
}

/// Whether the linear baseline is refit at every origin or once at the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LmRefit {
    #[default]
    EachWeek,
    Once,
}

impl FromStr for LmRefit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "each_week" | "each-week" | "weekly" => Ok(LmRefit::EachWeek),
            "once" => Ok(LmRefit::Once),
            other => Err(Error::invalid(format!("unknown lm refit mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BacktestSettings {
    pub protocol: ProtocolConfig,
    pub optimizer: OptimizerConfig,
    pub pipeline: PipelineConfig,
    pub lm_refit: LmRefit,
}

/// One hyperparameter re-selection during a GP backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitRecord {
    pub target_week: u32,
    pub lags: [u32; N_COVARIATES],
    pub hyperparameters: KernelHyperparameters,
    pub lml: f64,
}

/// Produces forecasts for increasing target weeks, carrying hyperparameters,
/// lags and fitted baselines between origins.
pub struct Forecaster<'a> {
    history: &'a dyn CityHistory,
    model: ModelKind,
    settings: &'a BacktestSettings,
    selected: Option<Selected>,
    lm_once: Option<(LinearModelState, TransformState)>,
    refits: Vec<RefitRecord>,
}

#[derive(Clone, Copy)]
struct Selected {
    target_week: u32,
    lags: [u32; N_COVARIATES],
    hyper: Option<KernelHyperparameters>,
}

impl<'a> Forecaster<'a> {
    pub fn new(
        history: &'a dyn CityHistory,
        model: ModelKind,
        settings: &'a BacktestSettings,
    ) -> Self {
        Forecaster {
            history,
            model,
            settings,
            selected: None,
            lm_once: None,
            refits: Vec::new(),
        }
    }

    pub fn refits(&self) -> &[RefitRecord] {
        &self.refits
    }

    fn due(&self, target: u32) -> Option<[u32; N_COVARIATES]> {
        let s = self.selected?;
        (target < s.target_week + self.settings.protocol.refit_every).then_some(s.lags)
    }

    /// Forecast for `target_week` using weeks up to `target_week - horizon`.
    pub fn forecast(&mut self, target_week: u32) -> Result<PredictiveDistribution> {
        let horizon = self.settings.protocol.horizon;
        let training_end = target_week
            .checked_sub(horizon)
            .filter(|w| *w >= self.history.first_week())
            .ok_or_else(|| Error::invalid(format!("no training data before week {target_week}")))?;
        match self.model {
            ModelKind::Gp => self.forecast_gp(target_week, training_end),
            ModelKind::Lm => self.forecast_lm(target_week, training_end),
            ModelKind::Ar => self.forecast_ar(training_end, horizon),
        }
    }

    fn forecast_gp(&mut self, target: u32, training_end: u32) -> Result<PredictiveDistribution> {
        let pipeline = &self.settings.pipeline;
        let reuse = self.due(target).zip(self.selected.and_then(|s| s.hyper));
        let (prepared, hyper) = match reuse {
            Some((lags, hyper)) => (
                prepare_origin(self.history, training_end, Some(lags), pipeline)?,
                hyper,
            ),
            None => {
                let prepared = prepare_origin(self.history, training_end, None, pipeline)?;
                let opt = optimize(
                    &prepared.inputs,
                    &prepared.targets,
                    &self.settings.optimizer,
                )?;
                self.selected = Some(Selected {
                    target_week: target,
                    lags: prepared.transform.lags,
                    hyper: Some(opt.hyperparameters),
                });
                self.refits.push(RefitRecord {
                    target_week: target,
                    lags: prepared.transform.lags,
                    hyperparameters: opt.hyperparameters,
                    lml: opt.lml,
                });
                (prepared, opt.hyperparameters)
            }
        };
        let query = query_input(self.history, &prepared.transform, target)?;
        TrainedGp::fit(prepared.inputs, prepared.targets, hyper)?
            .with_transform(prepared.transform)
            .predict(&query)
    }

    fn forecast_lm(&mut self, target: u32, training_end: u32) -> Result<PredictiveDistribution> {
        let (state, transform) = match (&self.lm_once, self.settings.lm_refit) {
            (Some(fit), LmRefit::Once) => fit.clone(),
            _ => {
                let lags = self.due(target);
                let prepared =
                    prepare_origin(self.history, training_end, lags, &self.settings.pipeline)?;
                if lags.is_none() {
                    self.selected = Some(Selected {
                        target_week: target,
                        lags: prepared.transform.lags,
                        hyper: None,
                    });
                }
                let state = lm_fit(&prepared.covariates, &prepared.log_response, training_end)?;
                if self.settings.lm_refit == LmRefit::Once {
                    self.lm_once = Some((state, prepared.transform.clone()));
                }
                (state, prepared.transform)
            }
        };
        let x = query_covariates(self.history, &transform, target)?;
        Ok(PredictiveDistribution::from_log_scale(
            lm_predict(&state, &x),
            state.residual_variance,
            0.0,
        ))
    }

    fn forecast_ar(&mut self, training_end: u32, horizon: u32) -> Result<PredictiveDistribution> {
        let (clean, _) = cleaned_dir(self.history, training_end, &self.settings.pipeline)?;
        let log = log_transform(&clean)?;
        let state = ar_fit(&log, training_end)?;
        let last = log
            .get(training_end)
            .expect("training end is inside the series");
        Ok(PredictiveDistribution::from_log_scale(
            ar_forecast(&state, last, horizon),
            ar_forecast_variance(&state, horizon),
            0.0,
        ))
    }
}

/// One target week. Prediction fields are empty when the fit failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub target_week: u32,
    pub actual_dir: Option<f64>,
    pub predicted_dir: Option<f64>,
    /// Log-scale predictive standard deviation.
    pub sd: Option<f64>,
    pub lower95: Option<f64>,
    pub upper95: Option<f64>,
}

impl ForecastRow {
    pub fn is_scored(&self) -> bool {
        self.actual_dir.is_some() && self.predicted_dir.is_some()
    }
}

/// Which incidence bands the evaluation window actually straddles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandEligibility {
    Neither,
    MediumOnly,
    HighOnly,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub city_id: String,
    pub model: ModelKind,
    pub protocol: ProtocolConfig,
    pub rows: Vec<ForecastRow>,
    pub pearson: Option<f64>,
    pub auc_medium: Option<f64>,
    pub auc_high: Option<f64>,
    /// Mean of whichever band AUCs are present.
    pub auc_mean: Option<f64>,
    pub band_eligibility: BandEligibility,
    /// Rows whose model fit failed.
    pub missing: usize,
    pub refits: Vec<RefitRecord>,
}

impl BacktestReport {
    /// Computes every metric from the rows that have both an actual and a prediction.
    pub fn from_rows(
        city_id: impl Into<String>,
        model: ModelKind,
        protocol: ProtocolConfig,
        rows: Vec<ForecastRow>,
    ) -> Self {
        let (actual, predicted): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.is_scored())
            .map(|r| (r.actual_dir.unwrap(), r.predicted_dir.unwrap()))
            .unzip();
        let (auc_medium, auc_high) = if actual.is_empty() {
            (None, None)
        } else {
            (
                band_auc(&actual, &predicted, MEDIUM_THRESHOLD),
                band_auc(&actual, &predicted, HIGH_THRESHOLD),
            )
        };
        let present: Vec<f64> = [auc_medium, auc_high].into_iter().flatten().collect();
        let band_eligibility = match (auc_medium.is_some(), auc_high.is_some()) {
            (false, false) => BandEligibility::Neither,
            (true, false) => BandEligibility::MediumOnly,
            (false, true) => BandEligibility::HighOnly,
            (true, true) => BandEligibility::Both,
        };
        BacktestReport {
            city_id: city_id.into(),
            model,
            protocol,
            missing: rows.iter().filter(|r| r.predicted_dir.is_none()).count(),
            pearson: pearson(&actual, &predicted),
            auc_medium,
            auc_high,
            auc_mean: (!present.is_empty())
                .then(|| present.iter().sum::<f64>() / present.len() as f64),
            band_eligibility,
            rows,
            refits: Vec::new(),
        }
    }

    pub fn forecasts(&self) -> usize {
        self.rows.len() - self.missing
    }
}

/// Runs the rolling-origin protocol for one city and model. A failed fit at
/// one origin leaves that week empty instead of aborting.
pub fn run_backtest(
    history: &dyn CityHistory,
    model: ModelKind,
    settings: &BacktestSettings,
) -> Result<BacktestReport> {
    let protocol = settings.protocol;
    protocol.validate()?;
    settings.optimizer.validate()?;
    let last = protocol.last_target.unwrap_or(history.last_week());
    if last > history.last_week() {
        return Err(Error::invalid(format!(
            "last target {last} is beyond the observed series ending at week {}",
            history.last_week()
        )));
    }
    let needed = MAX_LAG + LAG_SELECTION_MARGIN + 1;
    let available =
        (protocol.first_target - protocol.horizon + 1).saturating_sub(history.first_week());
    if available < needed {
        return Err(Error::invalid(format!(
            "insufficient history: {available} training weeks before the first target, need {needed}"
        )));
    }

    let mut forecaster = Forecaster::new(history, model, settings);
    let rows = protocol
        .targets(last)
        .map(|t| {
            history.begin_origin(t);
            let pred = forecaster.forecast(t).ok();
            ForecastRow {
                target_week: t,
                actual_dir: history.actual_dir(t),
                predicted_dir: pred.map(|p| p.natural_mean),
                sd: pred.map(|p| p.sd()),
                lower95: pred.map(|p| p.natural_lower),
                upper95: pred.map(|p| p.natural_upper),
            }
        })
        .collect();
    let mut report = BacktestReport::from_rows(history.city_id(), model, protocol, rows);
    report.refits = forecaster.refits;
    Ok(report)
}
