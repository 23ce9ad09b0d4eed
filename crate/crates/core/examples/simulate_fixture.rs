//! Writes a synthetic dataset to disk in the CSV layout the loader expects,
//! then loads it back.
//!
//! `cargo run --example simulate_fixture -- [out_dir]`

use std::path::PathBuf;

use dengue_gp::data::{load_dataset, DatasetPaths};
use dengue_gp::synth::{make_multi_city_fixture, FixtureOptions, Incidence};

fn main() -> dengue_gp::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("dengue-gp-fixture"));
    let options = FixtureOptions {
        n_cities: 5,
        variations: vec![Incidence::Low, Incidence::Medium, Incidence::High],
        ..Default::default()
    };
    let (_, manifest) = make_multi_city_fixture(&options, &dir)?;
    let loaded = load_dataset(&DatasetPaths::in_dir(&dir))?;

    println!("wrote {}", dir.display());
    for city in &manifest.cities {
        let panel = loaded.panel(&city.city_id)?;
        let peak = panel.dir.values.iter().copied().fold(0.0, f64::max);
        println!(
            "{} {:?}: {} weeks, peak DIR {peak:.1}, station {}",
            city.city_id,
            city.incidence,
            panel.dir.len(),
            panel.station_id
        );
    }
    Ok(())
}
