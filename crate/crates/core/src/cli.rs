//! Command-line front end.
//!
//! Settings start from a flat `key = value` file (`--config`).
//! `DENGUE_GP_<KEY>` environment variables override it and flags override both.
//! Exit codes: 0 success, 2 invalid input, 3 model failure, 4 I/O.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{load_dataset, CityPanel, Dataset, DatasetPaths, Region};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_reports, read_forecast_csv, run_backtest, write_forecast_csv, BacktestReport,
    BacktestSettings, Forecaster, LmRefit, Metric, ModelKind, ProtocolConfig, Summary,
};
use crate::gp::TrainedGp;
use crate::hyperopt::{optimize, OptimizerConfig};
use crate::pipeline::{prepare_origin, CityHistory, LagTarget, PipelineConfig};
use crate::synth::{make_multi_city_fixture, FixtureOptions, Incidence, SynthSpec};

pub const ENV_PREFIX: &str = "DENGUE_GP_";
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_MODEL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Fewest weeks `train` accepts before the training end.
pub const MIN_TRAIN_WEEKS: u32 = 104;

/// Every key accepted in the config file and as a `DENGUE_GP_` variable.
pub const CONFIG_KEYS: &[&str] = &[
    "data_dir",
    "out_dir",
    "model",
    "seed",
    "jobs",
    "horizon",
    "first_target",
    "last_target",
    "refit_every",
    "restarts",
    "max_iterations",
    "gradient_tolerance",
    "city",
    "training_end",
    "min_population",
    "n_cities",
    "weeks",
    "incidence",
    "remove_outliers",
    "critical_value",
    "lag_target",
    "lm_refit",
    "verbose",
];

#[derive(Debug, Parser)]
#[command(
    name = "dengue-gp",
    version,
    about = "Gaussian-process forecasts of weekly dengue incidence"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the CSV inputs and print a dataset summary.
    Ingest,
    /// Fit GP hyperparameters for one city and save the model.
    Train,
    /// Forecast `horizon` weeks past the training end for one city.
    Forecast,
    /// Rolling-origin backtest of the selected models over every city.
    Backtest,
    /// Write a synthetic multi-city dataset.
    Simulate,
    /// Turn backtest forecasts into plot-ready CSVs.
    Report,
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// Flat key = value settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// gp, lm, ar or all.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for cities and restarts.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<u32>,
    #[arg(long, global = true)]
    pub first_target: Option<u32>,
    #[arg(long, global = true)]
    pub last_target: Option<u32>,
    /// Weeks between hyperparameter re-optimizations.
    #[arg(long, global = true)]
    pub refit_every: Option<u32>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true)]
    pub city: Option<String>,
    #[arg(long, global = true)]
    pub training_end: Option<u32>,
    #[arg(long, global = true)]
    pub min_population: Option<u64>,
    #[arg(long, global = true)]
    pub n_cities: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Flags {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("data_dir", path(&self.data_dir));
        put("out_dir", path(&self.out_dir));
        put("model", self.model.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("jobs", self.jobs.map(|v| v.to_string()));
        put("horizon", self.horizon.map(|v| v.to_string()));
        put("first_target", self.first_target.map(|v| v.to_string()));
        put("last_target", self.last_target.map(|v| v.to_string()));
        put("refit_every", self.refit_every.map(|v| v.to_string()));
        put("restarts", self.restarts.map(|v| v.to_string()));
        put("city", self.city.clone());
        put("training_end", self.training_end.map(|v| v.to_string()));
        put("min_population", self.min_population.map(|v| v.to_string()));
        put("n_cities", self.n_cities.map(|v| v.to_string()));
        put(
            "verbose",
            (self.verbose > 0).then(|| self.verbose.to_string()),
        );
        m
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub settings: BacktestSettings,
    pub city: Option<String>,
    pub training_end: Option<u32>,
    pub min_population: u64,
    pub n_cities: usize,
    pub weeks: u32,
    pub incidence: Vec<Incidence>,
    pub verbose: u8,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| schema(format!("expected `key = value`, got `{line}`")))?;
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(schema(format!("unknown key `{key}`")));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// `DENGUE_GP_*` variables that name a known key.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> BTreeMap<String, String> {
    vars.into_iter()
        .filter_map(|(k, v)| {
            let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
            CONFIG_KEYS.contains(&key.as_str()).then_some((key, v))
        })
        .collect()
}

fn parse<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| Error::invalid(format!("bad value `{v}` for {key}")))
        })
        .transpose()
}

fn parse_bool(map: &BTreeMap<String, String>, key: &str) -> Result<Option<bool>> {
    map.get(key)
        .map(|v| match v.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "on" => Ok(true),
            "0" | "false" | "no" | "off" => Ok(false),
            _ => Err(Error::invalid(format!("bad value `{v}` for {key}"))),
        })
        .transpose()
}

impl RunConfig {
    /// Builds the configuration from merged key/value settings.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<RunConfig> {
        let models = match map.get("model").map(|s| s.trim().to_ascii_lowercase()) {
            None => ModelKind::ALL.to_vec(),
            Some(s) if s == "all" => ModelKind::ALL.to_vec(),
            Some(s) => s
                .split(',')
                .map(|m| m.parse::<ModelKind>())
                .collect::<Result<Vec<_>>>()?,
        };
        let seed = parse(map, "seed")?.unwrap_or(0);

        let mut protocol = ProtocolConfig::default();
        if let Some(v) = parse(map, "horizon")? {
            protocol.horizon = v;
        }
        if let Some(v) = parse(map, "first_target")? {
            protocol.first_target = v;
        }
        protocol.last_target = parse(map, "last_target")?;
        if let Some(v) = parse(map, "refit_every")? {
            protocol.refit_every = v;
        }
        protocol.validate()?;

        let mut optimizer = OptimizerConfig {
            seed,
            ..Default::default()
        };
        if let Some(v) = parse(map, "restarts")? {
            optimizer.restarts = v;
        }
        if let Some(v) = parse(map, "max_iterations")? {
            optimizer.max_iterations = v;
        }
        if let Some(v) = parse(map, "gradient_tolerance")? {
            optimizer.gradient_tolerance = v;
        }
        optimizer.validate()?;

        let mut pipeline = PipelineConfig::default();
        if let Some(v) = parse_bool(map, "remove_outliers")? {
            pipeline.remove_outliers = v;
        }
        if let Some(v) = parse::<f64>(map, "critical_value")? {
            if !(v > 0.0) {
                return Err(Error::invalid("critical_value must be positive"));
            }
            pipeline.outlier_critical_value = v;
        }
        if let Some(v) = map.get("lag_target") {
            pipeline.lag_target = match v.trim().to_ascii_lowercase().as_str() {
                "log" => LagTarget::Log,
                "raw" => LagTarget::Raw,
                other => return Err(Error::invalid(format!("bad lag_target `{other}`"))),
            };
        }
        let lm_refit = match map.get("lm_refit") {
            Some(v) => v.parse::<LmRefit>()?,
            None => LmRefit::default(),
        };

        let incidence = match map.get("incidence") {
            None => FixtureOptions::default().variations,
            Some(v) => v
                .split(',')
                .map(|s| match s.trim().to_ascii_lowercase().as_str() {
                    "low" => Ok(Incidence::Low),
                    "medium" => Ok(Incidence::Medium),
                    "high" => Ok(Incidence::High),
                    other => Err(Error::invalid(format!("bad incidence `{other}`"))),
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let jobs = parse::<usize>(map, "jobs")?;
        if jobs == Some(0) {
            return Err(Error::invalid("jobs must be at least 1"));
        }

        Ok(RunConfig {
            data_dir: map.get("data_dir").map(PathBuf::from),
            out_dir: map.get("out_dir").map(PathBuf::from),
            models,
            seed,
            jobs,
            settings: BacktestSettings {
                protocol,
                optimizer,
                pipeline,
                lm_refit,
            },
            city: map.get("city").cloned(),
            training_end: parse(map, "training_end")?,
            min_population: parse(map, "min_population")?.unwrap_or(0),
            n_cities: parse(map, "n_cities")?.unwrap_or(3),
            weeks: parse(map, "weeks")?.unwrap_or(209),
            incidence,
            verbose: parse(map, "verbose")?.unwrap_or(0),
        })
    }

    /// Merges file, environment and flag settings in increasing priority.
    pub fn resolve(flags: &Flags, env: BTreeMap<String, String>) -> Result<RunConfig> {
        let mut map = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_config_file(&text, path)?
            }
            None => BTreeMap::new(),
        };
        map.extend(env);
        map.extend(flags.overrides());
        RunConfig::from_map(&map)
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data_dir
            .as_deref()
            .ok_or_else(|| Error::invalid("--data-dir is required"))
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::invalid("--out-dir is required"))
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn load(&self) -> Result<Dataset> {
        let ds = load_dataset(&DatasetPaths::in_dir(self.data_dir()?))?;
        let ds = ds.with_min_population(self.min_population);
        if ds.cities.is_empty() {
            return Err(Error::invalid("no city passes the population filter"));
        }
        Ok(ds)
    }

    fn city_panel(&self, ds: &Dataset) -> Result<CityPanel> {
        let id = match &self.city {
            Some(c) => c.clone(),
            None => ds.cities[0].city_id.clone(),
        };
        ds.panel(&id)
    }
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        e if e.is_model_failure() => EXIT_MODEL,
        _ => EXIT_VALIDATION,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let summary = cfg.load()?.summary();
    if let Some(out) = &cfg.out_dir {
        create_dir(out)?;
        write_json(&out.join("dataset_summary.json"), &summary)?;
    }
    print_json(&summary)
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    city_id: &'a str,
    training_end: u32,
    lml: f64,
    best_restart: usize,
    model_path: PathBuf,
    diagnostics_path: PathBuf,
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let ds = cfg.load()?;
    let panel = cfg.city_panel(&ds)?;
    let training_end = cfg.training_end.unwrap_or(panel.last_week());
    let weeks = (training_end + 1).saturating_sub(panel.first_week());
    if weeks < MIN_TRAIN_WEEKS || training_end > panel.last_week() {
        return Err(Error::invalid(format!(
            "training needs at least {MIN_TRAIN_WEEKS} observed weeks up to the training end, got {weeks}"
        )));
    }
    let out = cfg.out_dir()?.join("models");
    create_dir(&out)?;
    let prepared = prepare_origin(&panel, training_end, None, &cfg.settings.pipeline)?;
    cfg.log(format!(
        "{}: optimizing on {} weeks",
        panel.city_id(),
        prepared.inputs.len()
    ));
    let result = optimize(&prepared.inputs, &prepared.targets, &cfg.settings.optimizer)?;
    let gp = TrainedGp::fit(prepared.inputs, prepared.targets, result.hyperparameters)?
        .with_transform(prepared.transform);

    let city_id = panel.city_id();
    let model_path = out.join(format!("{city_id}.json"));
    let diagnostics_path = out.join(format!("{city_id}_diagnostics.json"));
    fs::write(&model_path, gp.to_json()? + "\n").map_err(|e| Error::io(&model_path, e))?;
    write_json(&diagnostics_path, &result)?;
    print_json(&TrainOutput {
        city_id,
        training_end,
        lml: result.lml,
        best_restart: result.best_restart,
        model_path,
        diagnostics_path,
    })
}

#[derive(Serialize)]
struct ForecastOutput {
    city_id: String,
    model: ModelKind,
    training_end: u32,
    target_week: u32,
    predicted_dir: f64,
    sd: f64,
    lower95: f64,
    upper95: f64,
}

fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    let ds = cfg.load()?;
    let panel = cfg.city_panel(&ds)?;
    let training_end = cfg.training_end.unwrap_or(panel.last_week());
    let target = training_end + cfg.settings.protocol.horizon;
    let mut out = Vec::new();
    for &model in &cfg.models {
        let mut f = Forecaster::new(&panel, model, &cfg.settings);
        let p = f.forecast(target)?;
        out.push(ForecastOutput {
            city_id: panel.city_id().to_string(),
            model,
            training_end,
            target_week: target,
            predicted_dir: p.natural_mean,
            sd: p.sd(),
            lower95: p.natural_lower,
            upper95: p.natural_upper,
        });
    }
    if let Some(dir) = &cfg.out_dir {
        create_dir(dir)?;
        write_json(
            &dir.join(format!("forecast_{}.json", panel.city_id())),
            &out,
        )?;
    }
    print_json(&out)
}

#[derive(Debug, Serialize)]
struct Failure {
    city_id: String,
    model: ModelKind,
    error: String,
}

#[derive(Serialize)]
struct BacktestOutput<'a> {
    settings: &'a BacktestSettings,
    summary: Option<Summary>,
    failures: Vec<Failure>,
}

fn forecast_path(dir: &Path, city_id: &str, model: ModelKind) -> PathBuf {
    dir.join(format!("{city_id}_{model}.csv"))
}

fn cmd_backtest(cfg: &RunConfig) -> Result<()> {
    let ds = cfg.load()?;
    let panels = ds.panels()?;
    let out = cfg.out_dir()?;
    let forecasts = out.join("forecasts");
    create_dir(&forecasts)?;

    let jobs: Vec<(&CityPanel, ModelKind)> = panels
        .iter()
        .flat_map(|p| cfg.models.iter().map(move |m| (p, *m)))
        .collect();
    let results: Vec<(String, ModelKind, Result<BacktestReport>)> = jobs
        .par_iter()
        .map(|(panel, model)| {
            let r = run_backtest(*panel, *model, &cfg.settings).and_then(|report| {
                write_forecast_csv(&forecast_path(&forecasts, panel.city_id(), *model), &report)?;
                Ok(report)
            });
            match &r {
                Ok(rep) => cfg.log(format!(
                    "{} {model}: {} forecasts, pearson {:?}",
                    panel.city_id(),
                    rep.forecasts(),
                    rep.pearson
                )),
                Err(e) => cfg.log(format!("{} {model}: failed: {e}", panel.city_id())),
            }
            (panel.city_id().to_string(), *model, r)
        })
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (city_id, model, r) in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                failures.push(Failure {
                    city_id,
                    model,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let summary = if reports.is_empty() {
        None
    } else {
        Some(aggregate_reports(&reports, &ds.cities)?)
    };
    write_json(
        &out.join("summary.json"),
        &BacktestOutput {
            settings: &cfg.settings,
            summary,
            failures,
        },
    )?;
    match first_error {
        Some(e) if reports.is_empty() => Err(e),
        _ => Ok(()),
    }
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let options = FixtureOptions {
        n_cities: cfg.n_cities,
        variations: cfg.incidence.clone(),
        base: SynthSpec {
            weeks: cfg.weeks,
            ..SynthSpec::strongly_periodic(cfg.seed)
        },
    };
    let (ds, _) = make_multi_city_fixture(&options, out)?;
    print_json(&ds.summary())
}

/// Reads every forecast CSV under `dir` back into reports.
pub fn load_forecast_reports(dir: &Path, protocol: ProtocolConfig) -> Result<Vec<BacktestReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|path| {
            let (model, rows) = read_forecast_csv(path)?;
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let suffix = format!("_{model}");
            let city_id = stem.strip_suffix(&suffix).ok_or_else(|| Error::Schema {
                path: path.clone(),
                line: 1,
                message: format!("file name should end in `{suffix}.csv`"),
            })?;
            Ok(BacktestReport::from_rows(city_id, model, protocol, rows))
        })
        .collect()
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let mut emit = |r: &[String]| {
        w.write_record(r)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    };
    emit(header)?;
    for r in rows {
        emit(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let ds = cfg.load()?;
    let out = cfg.out_dir()?;
    let reports = load_forecast_reports(&out.join("forecasts"), cfg.settings.protocol)?;
    let summary = aggregate_reports(&reports, &ds.cities)?;
    let dir = out.join("report");
    create_dir(&dir)?;

    let region = |id: &str| ds.city(id).map_or(Region::Other, |c| c.region);
    let mut scatter = Vec::new();
    for metric in Metric::ALL {
        for (i, &a) in summary.models.iter().enumerate() {
            for &b in &summary.models[i + 1..] {
                for ra in reports.iter().filter(|r| r.model == a) {
                    let Some(rb) = reports
                        .iter()
                        .find(|r| r.model == b && r.city_id == ra.city_id)
                    else {
                        continue;
                    };
                    let (Some(x), Some(y)) = (metric.of(ra), metric.of(rb)) else {
                        continue;
                    };
                    scatter.push(vec![
                        metric.to_string(),
                        a.to_string(),
                        b.to_string(),
                        ra.city_id.clone(),
                        region(&ra.city_id).to_string(),
                        x.to_string(),
                        y.to_string(),
                    ]);
                }
            }
        }
    }
    write_csv(
        &dir.join("scatter.csv"),
        &strings(&[
            "metric", "model_x", "model_y", "city_id", "region", "x", "y",
        ]),
        &scatter,
    )?;

    let boxplot: Vec<Vec<String>> = summary
        .groups
        .iter()
        .filter_map(|g| {
            let q = g.quartiles?;
            Some(vec![
                g.model.to_string(),
                g.region.clone(),
                g.metric.to_string(),
                q.n.to_string(),
                q.min.to_string(),
                q.q1.to_string(),
                q.median.to_string(),
                q.q3.to_string(),
                q.max.to_string(),
            ])
        })
        .collect();
    write_csv(
        &dir.join("boxplot.csv"),
        &strings(&[
            "model", "region", "metric", "n", "min", "q1", "median", "q3", "max",
        ]),
        &boxplot,
    )?;

    let mut city_ids: Vec<&str> = reports.iter().map(|r| r.city_id.as_str()).collect();
    city_ids.sort();
    city_ids.dedup();
    for city_id in city_ids {
        let mut of_city: Vec<&BacktestReport> =
            reports.iter().filter(|r| r.city_id == city_id).collect();
        of_city.sort_by_key(|r| r.model);
        let mut weeks: Vec<u32> = of_city
            .iter()
            .flat_map(|r| r.rows.iter().map(|x| x.target_week))
            .collect();
        weeks.sort();
        weeks.dedup();
        let mut header = strings(&["target_week", "actual_dir"]);
        for r in &of_city {
            for col in ["predicted_dir", "lower95", "upper95"] {
                header.push(format!("{}_{col}", r.model));
            }
        }
        let rows: Vec<Vec<String>> = weeks
            .iter()
            .map(|&w| {
                let find = |r: &BacktestReport| r.rows.iter().find(|x| x.target_week == w).copied();
                let actual = of_city
                    .iter()
                    .find_map(|r| find(r).and_then(|x| x.actual_dir));
                let mut row = vec![w.to_string(), num(actual)];
                for r in &of_city {
                    let x = find(r);
                    row.push(num(x.and_then(|x| x.predicted_dir)));
                    row.push(num(x.and_then(|x| x.lower95)));
                    row.push(num(x.and_then(|x| x.upper95)));
                }
                row
            })
            .collect();
        write_csv(
            &dir.join(format!("trajectory_{city_id}.csv")),
            &header,
            &rows,
        )?;
    }
    write_json(&dir.join("summary.json"), &summary)
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Ingest => cmd_ingest(cfg),
        Command::Train => cmd_train(cfg),
        Command::Forecast => cmd_forecast(cfg),
        Command::Backtest => cmd_backtest(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Report => cmd_report(cfg),
    }
}

/// Runs one invocation with an explicit environment and returns the exit code.
pub fn run_with_env<I, T>(args: I, env: BTreeMap<String, String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
        }
    };
    let result = RunConfig::resolve(&cli.flags, env).and_then(|cfg| {
        let work = || dispatch(&cli.command, &cfg);
        match cfg.jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
                .install(work),
            None => work(),
        }
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point used by the binary: reads `DENGUE_GP_*` from the process environment.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_env(args, env_overrides(std::env::vars()))
}
