//! Fits both baselines on a synthetic city at one origin and compares their
//! four-week-ahead forecasts with the observed value.
//!
//! `cargo run --example baselines`

use dengue_gp::baselines::{ar_fit, ar_forecast4, lm_fit, lm_predict};
use dengue_gp::pipeline::{prepare_origin, query_covariates, CityHistory, PipelineConfig};
use dengue_gp::preprocess::log_transform;
use dengue_gp::synth::{build_fixture, FixtureOptions};

fn main() -> dengue_gp::Result<()> {
    let (dataset, _) = build_fixture(&FixtureOptions {
        n_cities: 1,
        ..Default::default()
    })?;
    let panel = dataset.panel("city01")?;
    let (training_end, target) = (160, 164);

    let prepared = prepare_origin(&panel, training_end, None, &PipelineConfig::default())?;
    let lm = lm_fit(&prepared.covariates, &prepared.log_response, training_end)?;
    let x = query_covariates(&panel, &prepared.transform, target)?;
    println!(
        "LM: intercept {:.3}, coefficients {:.3?}, forecast DIR {:.2}",
        lm.intercept,
        lm.coefficients,
        lm_predict(&lm, &x).exp_m1().max(0.0)
    );

    let log = log_transform(&panel.dir.truncated(training_end))?;
    let ar = ar_fit(&log, training_end)?;
    println!(
        "AR(1) over the last {} weeks: phi {:.3}, intercept {:.3}, forecast DIR {:.2}",
        ar.window,
        ar.phi,
        ar.intercept,
        ar_forecast4(&ar, log.get(training_end).unwrap())
            .exp_m1()
            .max(0.0)
    );
    println!(
        "observed DIR at week {target}: {:.2}",
        panel.actual_dir(target).unwrap()
    );
    Ok(())
}
