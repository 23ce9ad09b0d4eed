//! The binary end to end: exit codes, files written and their contents.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dengue_gp::gp::TrainedGp;
use dengue_gp::hyperopt::Bounds;
use dengue_gp::kernels::Hyper;
use serde_json::Value;

fn bin(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dengue-gp"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, n: usize) -> PathBuf {
    let data = dir.join("data");
    let out = bin(
        &[
            "simulate",
            "--out-dir",
            s(&data),
            "--seed",
            "0",
            "--n-cities",
            &n.to_string(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data
}

#[test]
fn simulate_is_deterministic_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(&tmp.path().join("a"), 4);
    let b = simulate(&tmp.path().join("b"), 4);
    for f in [
        "cases.csv",
        "climate.csv",
        "cities.csv",
        "stations.csv",
        "population.csv",
        "synth_spec.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let out = bin(&["ingest", "--data-dir", s(&a)], &[]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_json(&out)["cities"], 4);
}

#[test]
fn ingest_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 3);
    let out_dir = tmp.path().join("out");
    let out = bin(
        &["ingest", "--data-dir", s(&data), "--out-dir", s(&out_dir)],
        &[],
    );
    assert_eq!(code(&out), 0);
    let summary: Value =
        serde_json::from_slice(&fs::read(out_dir.join("dataset_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cities"], 3);
    assert_eq!(summary["assignments"].as_array().unwrap().len(), 3);

    let cases = data.join("cases.csv");
    let text = fs::read_to_string(&cases)
        .unwrap()
        .replacen("city01,5,", "city01,five,", 1);
    fs::write(&cases, text).unwrap();
    let out = bin(&["ingest", "--data-dir", s(&data)], &[]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cases.csv:6:"), "{err}");

    let out = bin(
        &["ingest", "--data-dir", s(&tmp.path().join("nowhere"))],
        &[],
    );
    assert_eq!(code(&out), 4);
}

#[test]
fn invalid_settings_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 1);
    let d = s(&data);
    assert_eq!(
        code(&bin(
            &[
                "backtest",
                "--data-dir",
                d,
                "--out-dir",
                d,
                "--horizon",
                "0"
            ],
            &[]
        )),
        2
    );
    assert_eq!(
        code(&bin(
            &["forecast", "--data-dir", d, "--model", "arima"],
            &[]
        )),
        2
    );
    assert_eq!(
        code(&bin(
            &["forecast", "--data-dir", d],
            &[("DENGUE_GP_RESTARTS", "0")]
        )),
        2
    );
    assert_eq!(
        code(&bin(
            &[
                "train",
                "--data-dir",
                d,
                "--out-dir",
                d,
                "--training-end",
                "100"
            ],
            &[]
        )),
        2
    );
    assert_eq!(
        code(&bin(&["train", "--data-dir", d, "--city", "atlantis"], &[])),
        2
    );
    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "seed = 1\nflavour = mint\n").unwrap();
    let out = bin(&["ingest", "--data-dir", d, "--config", s(&conf)], &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.conf:2:"));
}

#[test]
fn train_recovers_the_period_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 1);
    let mut models = Vec::new();
    for run in ["a", "b"] {
        let out_dir = tmp.path().join(run);
        let out = bin(
            &[
                "train",
                "--data-dir",
                s(&data),
                "--out-dir",
                s(&out_dir),
                "--seed",
                "3",
            ],
            &[],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join("models/city01_diagnostics.json").exists());
        models.push(fs::read_to_string(out_dir.join("models/city01.json")).unwrap());
    }
    assert_eq!(models[0], models[1]);
    let gp = TrainedGp::from_json(&models[0]).unwrap();
    assert!(Bounds::default().contains(gp.hyperparameters()));
    let p = gp.hyperparameters().get(Hyper::Period);
    assert!((p - 52.0).abs() <= 2.0, "period {p}");
}

#[test]
fn forecast_reads_settings_from_file_and_env() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 2);
    let conf = tmp.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "data_dir = {}\nhorizon = 2\ntraining_end = 150\ncity = city02\n",
            s(&data)
        ),
    )
    .unwrap();
    let out = bin(
        &["forecast", "--config", s(&conf), "--model", "lm"],
        &[("DENGUE_GP_HORIZON", "6")],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_json(&out);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["city_id"], "city02");
    assert_eq!(rows[0]["target_week"], 156);

    let out = bin(
        &["forecast", "--config", s(&conf), "--horizon", "4"],
        &[("DENGUE_GP_HORIZON", "6")],
    );
    let rows = stdout_json(&out);
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert!(rows
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["target_week"] == 154));
    for r in rows.as_array().unwrap() {
        let (lo, mid, hi) = (
            r["lower95"].as_f64().unwrap(),
            r["predicted_dir"].as_f64().unwrap(),
            r["upper95"].as_f64().unwrap(),
        );
        assert!(0.0 <= lo && lo <= mid && mid <= hi);
    }
}

/// Type-7 quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn pearson_from_csv(path: &Path) -> Option<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let (mut a, mut p) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.unwrap();
        if let (Ok(x), Ok(y)) = (rec[1].parse::<f64>(), rec[2].parse::<f64>()) {
            a.push(x);
            p.push(y);
        }
    }
    (a.len() >= 3).then(|| common::pearson_definition(&a, &p))
}

#[test]
fn backtest_and_report_outputs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), 3);
    let out_dir = tmp.path().join("out");
    let args = [
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&out_dir),
        "--first-target",
        "170",
        "--jobs",
        "2",
    ];
    let out = bin(&[&["backtest"], &args[..]].concat(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let mut csvs: Vec<_> = fs::read_dir(out_dir.join("forecasts"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    csvs.sort();
    assert_eq!(csvs.len(), 9);

    let summary: Value =
        serde_json::from_slice(&fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["failures"].as_array().unwrap().is_empty());
    let groups = summary["summary"]["groups"].as_array().unwrap();
    for model in ["gp", "lm", "ar"] {
        let mut values: Vec<f64> = (1..=3)
            .filter_map(|i| {
                pearson_from_csv(&out_dir.join(format!("forecasts/city0{i}_{model}.csv")))
            })
            .collect();
        values.sort_by(f64::total_cmp);
        let g = groups
            .iter()
            .find(|g| g["model"] == model && g["region"] == "All" && g["metric"] == "pearson")
            .unwrap();
        let q = &g["quartiles"];
        assert_eq!(q["n"].as_u64().unwrap() as usize, values.len());
        for (key, p) in [
            ("min", 0.0),
            ("q1", 0.25),
            ("median", 0.5),
            ("q3", 0.75),
            ("max", 1.0),
        ] {
            assert!(
                (q[key].as_f64().unwrap() - quantile(&values, p)).abs() < 1e-12,
                "{model} {key}"
            );
        }
    }

    let out = bin(&[&["report"], &args[..]].concat(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = out_dir.join("report");
    for i in 1..=3 {
        let mut r =
            csv::Reader::from_path(report.join(format!("trajectory_city0{i}.csv"))).unwrap();
        let weeks: Vec<u32> = r
            .records()
            .map(|x| x.unwrap()[0].parse().unwrap())
            .collect();
        assert_eq!(weeks, (170..=209).collect::<Vec<_>>());
    }
    let mut r = csv::Reader::from_path(report.join("scatter.csv")).unwrap();
    let pearson_gp_lm = r
        .records()
        .map(|x| x.unwrap())
        .filter(|x| &x[0] == "pearson" && &x[1] == "gp" && &x[2] == "lm")
        .count();
    assert_eq!(pearson_gp_lm, 3);

    let mut r = csv::Reader::from_path(report.join("boxplot.csv")).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let g = groups
            .iter()
            .find(|g| g["model"] == rec[0] && g["region"] == rec[1] && g["metric"] == rec[2])
            .unwrap();
        let median: f64 = rec[6].parse().unwrap();
        assert_eq!(median, g["quartiles"]["median"].as_f64().unwrap());
    }
}
