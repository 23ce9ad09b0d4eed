//! Rolling-origin backtesting and accuracy summaries.

mod backtest;
mod metrics;
mod summary;

pub use backtest::{
    run_backtest, BacktestReport, BacktestSettings, BandEligibility, ForecastRow, Forecaster,
    LmRefit, ModelKind, ProtocolConfig, RefitRecord,
};
pub use metrics::{band_auc, pearson, quantile_sorted, HIGH_THRESHOLD, MEDIUM_THRESHOLD};
pub use summary::{
    aggregate_reports, head_to_head, read_forecast_csv, write_forecast_csv, CityMetrics,
    GroupSummary, HeadToHead, Metric, Quartiles, Summary, ALL_REGIONS, FORECAST_HEADER,
};
