//! Injects a one-week spike into a seasonal series and lets the additive
//! outlier procedure find and repair it.
//!
//! `cargo run --example outliers`

use dengue_gp::data::WeeklySeries;
use dengue_gp::preprocess::{log_transform, remove_additive_outliers, DEFAULT_CRITICAL_VALUE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> dengue_gp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.15).expect("valid sd");
    let mut values: Vec<f64> = (0..156)
        .map(|i| {
            let season = (2.0 * std::f64::consts::PI * i as f64 / 52.0).sin();
            (3.0 + season + noise.sample(&mut rng)).exp_m1()
        })
        .collect();
    let spike = 90;
    values[spike] *= 12.0;

    let dir = WeeklySeries::new("demo", 1, values)?;
    let report = remove_additive_outliers(&dir, DEFAULT_CRITICAL_VALUE)?;
    println!(
        "flagged weeks: {:?} after {} iterations",
        report.flagged_weeks, report.iterations
    );

    let before = log_transform(&dir)?;
    let after = log_transform(&report.series)?;
    let week = dir.week_of(spike);
    for w in week - 2..=week + 2 {
        println!(
            "week {w:>3}: ln(1+DIR) {:>6.3} -> {:>6.3}",
            before.get(w).unwrap(),
            after.get(w).unwrap()
        );
    }
    Ok(())
}
