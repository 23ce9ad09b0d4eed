//! Loader behaviour on hand-edited fixtures.

use std::fs;
use std::path::Path;

use dengue_gp::data::{load_dataset, write_dataset, DatasetPaths};
use dengue_gp::synth::{make_multi_city_fixture, FixtureOptions};
use dengue_gp::Error;

fn fixture(dir: &Path) {
    make_multi_city_fixture(&FixtureOptions::default(), dir).unwrap();
}

fn edit(path: &Path, f: impl FnOnce(Vec<String>) -> Vec<String>) {
    let lines: Vec<String> = fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    fs::write(path, f(lines).join("\n") + "\n").unwrap();
}

fn schema_message(dir: &Path) -> (String, u64, String) {
    match load_dataset(&DatasetPaths::in_dir(dir)).unwrap_err() {
        Error::Schema {
            path,
            line,
            message,
        } => (
            path.file_name().unwrap().to_string_lossy().into_owned(),
            line,
            message,
        ),
        other => panic!("expected a schema error, got {other}"),
    }
}

#[test]
fn three_city_fixture_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let ds = load_dataset(&DatasetPaths::in_dir(tmp.path())).unwrap();
    assert_eq!(ds.cities.len(), 3);
    let lens: Vec<usize> = ds.cases.values().map(|s| s.len()).collect();
    assert_eq!(lens, vec![209; 3]);

    let again = tmp.path().join("again");
    fs::create_dir(&again).unwrap();
    write_dataset(&ds, &DatasetPaths::in_dir(&again)).unwrap();
    assert_eq!(load_dataset(&DatasetPaths::in_dir(&again)).unwrap(), ds);
}

#[test]
fn duplicate_case_row_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    edit(&tmp.path().join("cases.csv"), |mut l| {
        let dup = l[10].clone();
        l.insert(11, dup);
        l
    });
    let (file, line, msg) = schema_message(tmp.path());
    assert_eq!(file, "cases.csv");
    assert_eq!(line, 12);
    assert!(msg.contains("duplicate"), "{msg}");
}

#[test]
fn climate_gap_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    edit(&tmp.path().join("climate.csv"), |l| {
        l.into_iter()
            .filter(|r| !r.starts_with("st02,57,"))
            .collect()
    });
    let (file, _, msg) = schema_message(tmp.path());
    assert_eq!(file, "climate.csv");
    assert!(
        msg.contains("st02") && msg.contains("missing week 57"),
        "{msg}"
    );
}

#[test]
fn blank_climate_cells_are_interpolated() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let before = load_dataset(&DatasetPaths::in_dir(tmp.path())).unwrap();
    edit(&tmp.path().join("climate.csv"), |l| {
        l.into_iter()
            .map(|r| {
                if r.starts_with("st01,57,") {
                    let mut f: Vec<&str> = r.split(',').collect();
                    f[3] = "";
                    f.join(",")
                } else {
                    r
                }
            })
            .collect()
    });
    let after = load_dataset(&DatasetPaths::in_dir(tmp.path())).unwrap();
    let (b, a) = (
        before.station("st01").unwrap(),
        after.station("st01").unwrap(),
    );
    let expect = 0.5 * (b.climate_at(56).unwrap()[1] + b.climate_at(58).unwrap()[1]);
    assert!((a.climate_at(57).unwrap()[1] - expect).abs() < 1e-12);
    assert_eq!(a.climate_at(57).unwrap()[0], b.climate_at(57).unwrap()[0]);
}

#[test]
fn city_without_population_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    edit(&tmp.path().join("population.csv"), |l| {
        l.into_iter()
            .filter(|r| !r.starts_with("city03,"))
            .collect()
    });
    let (file, _, msg) = schema_message(tmp.path());
    assert_eq!(file, "cities.csv");
    assert!(msg.contains("city03"), "{msg}");
}

#[test]
fn wrong_column_count_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    edit(&tmp.path().join("stations.csv"), |mut l| {
        l[2].push_str(",extra");
        l
    });
    let (file, line, _) = schema_message(tmp.path());
    assert_eq!((file.as_str(), line), ("stations.csv", 3));
}

#[test]
fn missing_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    fs::remove_file(tmp.path().join("stations.csv")).unwrap();
    let err = load_dataset(&DatasetPaths::in_dir(tmp.path())).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn population_filter_drops_small_cities() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let ds = load_dataset(&DatasetPaths::in_dir(tmp.path())).unwrap();
    let big = ds.with_min_population(180_000);
    let ids: Vec<&str> = big.cities.iter().map(|c| c.city_id.as_str()).collect();
    assert_eq!(ids, ["city02", "city03"]);
}
