//! Fits a GP with fixed hyperparameters to one synthetic city and forecasts
//! four weeks past the end of its training window.
//!
//! `cargo run --release --example fit_predict`

use dengue_gp::gp::TrainedGp;
use dengue_gp::pipeline::{prepare_origin, query_input, CityHistory, PipelineConfig};
use dengue_gp::synth::{build_fixture, FixtureOptions};

fn main() -> dengue_gp::Result<()> {
    let options = FixtureOptions {
        n_cities: 1,
        ..Default::default()
    };
    let (dataset, manifest) = build_fixture(&options)?;
    let panel = dataset.panel("city01")?;
    let training_end = 150;

    let prepared = prepare_origin(&panel, training_end, None, &PipelineConfig::default())?;
    println!("lags (weeks): {:?}", prepared.transform.lags);
    println!("training rows: {}", prepared.inputs.len());

    // The generating hyperparameters; see the hyperopt example for fitting them.
    let h = manifest.options.base.hyperparameters;
    let gp = TrainedGp::fit(prepared.inputs, prepared.targets, h)?
        .with_transform(prepared.transform.clone());
    println!(
        "log marginal likelihood: {:.2}",
        gp.log_marginal_likelihood()
    );

    println!(
        "{:>5} {:>9} {:>9} {:>9} {:>9}",
        "week", "actual", "forecast", "lower95", "upper95"
    );
    for week in training_end + 1..=training_end + 4 {
        let p = gp.predict(&query_input(&panel, &prepared.transform, week)?)?;
        println!(
            "{week:>5} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            panel.actual_dir(week).unwrap_or(f64::NAN),
            p.natural_mean,
            p.natural_lower,
            p.natural_upper
        );
    }
    Ok(())
}
