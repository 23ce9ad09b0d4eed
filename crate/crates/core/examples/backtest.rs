//! Rolling-origin backtest of all three models on a three-city synthetic
//! fixture, followed by the cross-city summary.
//!
//! `cargo run --release --example backtest`

use dengue_gp::evaluation::{aggregate_reports, run_backtest, BacktestSettings, ModelKind};
use dengue_gp::synth::{build_fixture, FixtureOptions};
use rayon::prelude::*;

fn main() -> dengue_gp::Result<()> {
    let (dataset, _) = build_fixture(&FixtureOptions::default())?;
    let settings = BacktestSettings::default();
    let panels = dataset.panels()?;

    let jobs: Vec<_> = panels
        .iter()
        .flat_map(|p| ModelKind::ALL.map(|m| (p, m)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|(panel, model)| run_backtest(*panel, *model, &settings))
        .collect::<dengue_gp::Result<Vec<_>>>()?;

    println!(
        "{:<7} {:<3} {:>9} {:>8} {:>8} {:>8}",
        "city", "", "forecasts", "pearson", "auc_med", "auc_high"
    );
    let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.3}"));
    for r in &reports {
        println!(
            "{:<7} {:<3} {:>9} {:>8} {:>8} {:>8}",
            r.city_id,
            r.model,
            r.forecasts(),
            fmt(r.pearson),
            fmt(r.auc_medium),
            fmt(r.auc_high)
        );
    }

    let summary = aggregate_reports(&reports, &dataset.cities)?;
    for h in summary
        .head_to_head
        .iter()
        .filter(|h| h.model_a == ModelKind::Gp)
    {
        println!(
            "{}: gp wins {} / {} wins {} / ties {}",
            h.metric, h.wins_a, h.model_b, h.wins_b, h.ties
        );
    }
    Ok(())
}
