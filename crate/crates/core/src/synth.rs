//! Synthetic cities drawn from the GP prior, used as ground truth wherever
//! real surveillance data would otherwise be needed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    write_dataset, CityRecord, Climate, Dataset, DatasetPaths, Region, StationRecord, WeeklySeries,
    DIR_SCALE,
};
use crate::error::{Error, Result};
use crate::gp::factorize;
use crate::kernels::{
    gram_matrix, Hyper, KernelHyperparameters, KernelInput, NaturalHyperparameters, N_COVARIATES,
};
use crate::preprocess::CovariateMatrix;

pub const MIN_WEEKS: u32 = 60;
/// Period of every synthetic weather cycle.
pub const CLIMATE_PERIOD: f64 = 52.0;

/// `level + amplitude * sin(2π week / 52 + phase) + noise_sd * N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateProcess {
    pub level: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub noise_sd: f64,
    /// Floor applied after adding noise (rainfall cannot be negative).
    pub floor: Option<f64>,
}

impl CovariateProcess {
    fn sample(&self, week: i64, phase_shift: f64, rng: &mut impl Rng) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        let v = self.level
            + self.amplitude
                * (2.0 * PI * week as f64 / CLIMATE_PERIOD + self.phase + phase_shift).sin()
            + self.noise_sd * e;
        self.floor.map_or(v, |f| v.max(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub weeks: u32,
    pub hyperparameters: KernelHyperparameters,
    /// Rain, temperature and humidity in that order.
    pub covariates: [CovariateProcess; N_COVARIATES],
    /// Weeks by which weather leads its effect on incidence.
    pub covariate_lag: u32,
    /// Level of `ln(1 + DIR)` that the zero-mean draw is added to.
    pub log_mean: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Seasonality dominates: the quasi-periodic variance is twenty times the
    /// local one and seasons stay correlated for about four years.
    pub fn strongly_periodic(seed: u64) -> Self {
        SynthSpec {
            weeks: 209,
            hyperparameters: KernelHyperparameters::new(NaturalHyperparameters {
                sigma_loc_sq: 0.05,
                ell_loc: 3.0,
                sigma_qp_sq: 1.0,
                ell_qp: 200.0,
                ell_per: 0.8,
                period: 52.0,
                sigma_lin_sq: 0.05,
                ell_rain: 2.0,
                ell_temp: 2.0,
                ell_hum: 2.0,
                noise_var: 0.01,
            })
            .expect("positive"),
            covariates: [
                CovariateProcess {
                    level: 150.0,
                    amplitude: 100.0,
                    phase: 0.0,
                    noise_sd: 30.0,
                    floor: Some(0.0),
                },
                CovariateProcess {
                    level: 25.0,
                    amplitude: 3.0,
                    phase: 1.2,
                    noise_sd: 0.8,
                    floor: None,
                },
                CovariateProcess {
                    level: 75.0,
                    amplitude: 8.0,
                    phase: 0.4,
                    noise_sd: 3.0,
                    floor: Some(0.0),
                },
            ],
            covariate_lag: 8,
            log_mean: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weeks < MIN_WEEKS {
            return Err(Error::invalid(format!(
                "synthetic series need at least {MIN_WEEKS} weeks"
            )));
        }
        let finite = self.log_mean.is_finite()
            && self.covariates.iter().all(|c| {
                c.level.is_finite()
                    && c.amplitude.is_finite()
                    && c.phase.is_finite()
                    && c.noise_sd >= 0.0
            });
        if !finite {
            return Err(Error::invalid(
                "synthetic spec has non-finite or negative settings",
            ));
        }
        Ok(())
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::strongly_periodic(0)
    }
}

/// One prior draw for a city over weeks `1..=weeks`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDraw {
    /// Natural-scale incidence, clamped at zero.
    pub dir: WeeklySeries,
    /// Zero-mean latent function values (no observation noise).
    pub latent: Vec<f64>,
    /// `log_mean + latent + noise`, before back-transforming.
    pub log_dir: Vec<f64>,
    /// Raw weather of each week.
    pub climate: Vec<Climate>,
    /// Standardized weather of week `t - covariate_lag`, the covariates used to generate week `t`.
    pub covariates: CovariateMatrix,
    pub inputs: Vec<KernelInput>,
}

fn draw_with_shift(spec: &SynthSpec, city_id: &str, phase_shift: f64) -> Result<SynthDraw> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.weeks as usize;
    let lag = spec.covariate_lag as i64;

    // Weather from week 1 - lag so every generated week has its lagged covariates.
    let raw: Vec<Climate> = (1 - lag..=spec.weeks as i64)
        .map(|w| std::array::from_fn(|d| spec.covariates[d].sample(w, phase_shift, &mut rng)))
        .collect();
    let lagged = &raw[..n];
    let mut means = [0.0; N_COVARIATES];
    let mut stds = [1.0; N_COVARIATES];
    for d in 0..N_COVARIATES {
        let m = lagged.iter().map(|r| r[d]).sum::<f64>() / n as f64;
        let v = lagged.iter().map(|r| (r[d] - m).powi(2)).sum::<f64>() / n as f64;
        means[d] = m;
        if v > 0.0 {
            stds[d] = v.sqrt();
        }
    }
    let rows: Vec<[f64; N_COVARIATES]> = lagged
        .iter()
        .map(|r| std::array::from_fn(|d| (r[d] - means[d]) / stds[d]))
        .collect();
    let inputs: Vec<KernelInput> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| KernelInput {
            week: (i + 1) as f64,
            covariates: *r,
        })
        .collect();

    let h = &spec.hyperparameters;
    let factor = factorize(gram_matrix(&inputs, h, false)?)?;
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
    let latent: Vec<f64> = (factor.chol.l_dirty().lower_triangle() * z)
        .iter()
        .copied()
        .collect();
    let noise_sd = h.get(Hyper::NoiseVar).sqrt();
    let log_dir: Vec<f64> = latent
        .iter()
        .map(|f| {
            let e: f64 = StandardNormal.sample(&mut rng);
            spec.log_mean + f + noise_sd * e
        })
        .collect();
    let dir = WeeklySeries::new(
        city_id,
        1,
        log_dir.iter().map(|v| v.exp_m1().max(0.0)).collect(),
    )?;
    Ok(SynthDraw {
        dir,
        latent,
        log_dir,
        climate: raw[lag as usize..].to_vec(),
        covariates: CovariateMatrix {
            start_week: 1,
            rows,
        },
        inputs,
    })
}

/// Samples weather, builds the prior Gram matrix over the lagged covariates,
/// draws the latent function through its Cholesky factor and adds noise.
/// Bit-reproducible for a fixed spec.
pub fn draw_from_prior(spec: &SynthSpec) -> Result<SynthDraw> {
    draw_with_shift(spec, "synthetic", 0.0)
}

/// Incidence level of a fixture city.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Incidence {
    /// Rescaled so weekly incidence never reaches the medium band.
    Low,
    Medium,
    High,
}

impl Incidence {
    fn log_mean(self) -> f64 {
        match self {
            Incidence::Low => 1.0,
            Incidence::Medium => 3.0,
            Incidence::High => 3.8,
        }
    }
}

/// Highest weekly incidence a low-incidence city may reach.
pub const LOW_INCIDENCE_CAP: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureOptions {
    pub n_cities: usize,
    /// Cycled over the cities in order.
    pub variations: Vec<Incidence>,
    /// Template for every city; its seed is the base seed.
    pub base: SynthSpec,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            n_cities: 3,
            variations: vec![Incidence::Medium, Incidence::High],
            base: SynthSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCity {
    pub city_id: String,
    pub incidence: Incidence,
    pub phase_shift: f64,
    /// Shift applied to the log series to respect the low-incidence cap.
    pub log_shift: f64,
    pub spec: SynthSpec,
}

/// Provenance written next to the CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub options: FixtureOptions,
    pub cities: Vec<FixtureCity>,
}

pub const MANIFEST_FILE: &str = "synth_spec.json";

/// Builds an `n_cities` dataset with one co-located station per city and
/// writes it, plus a JSON manifest, to `dir`. City `i` uses seed `base + i`.
pub fn make_multi_city_fixture(
    options: &FixtureOptions,
    dir: &Path,
) -> Result<(Dataset, FixtureManifest)> {
    let (dataset, manifest) = build_fixture(options)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dataset(&dataset, &DatasetPaths::in_dir(dir))?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    Ok((dataset, manifest))
}

/// In-memory part of [`make_multi_city_fixture`].
pub fn build_fixture(options: &FixtureOptions) -> Result<(Dataset, FixtureManifest)> {
    if options.n_cities < 1 {
        return Err(Error::invalid("fixture needs at least one city"));
    }
    if options.variations.is_empty() {
        return Err(Error::invalid(
            "fixture needs at least one incidence variation",
        ));
    }
    let weeks = options.base.weeks;
    let mut cities = Vec::new();
    let mut stations = Vec::new();
    let mut cases = BTreeMap::new();
    let mut assignments = BTreeMap::new();
    let mut manifest_cities = Vec::new();

    for i in 0..options.n_cities {
        let city_id = format!("city{:02}", i + 1);
        let station_id = format!("st{:02}", i + 1);
        let incidence = options.variations[i % options.variations.len()];
        let seed = options.base.seed.wrapping_add(i as u64);
        let spec = SynthSpec {
            seed,
            log_mean: incidence.log_mean(),
            ..options.base.clone()
        };
        let mut shift_rng = ChaCha8Rng::seed_from_u64(seed);
        shift_rng.set_stream(1);
        let phase_shift = shift_rng.random_range(-0.5..0.5);
        let draw = draw_with_shift(&spec, &city_id, phase_shift)?;

        let cap = LOW_INCIDENCE_CAP.ln_1p();
        let top = draw
            .log_dir
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let log_shift = if incidence == Incidence::Low && top > cap {
            cap - top
        } else {
            0.0
        };
        let population = 150_000 + 37_000 * i as u64;
        let latitude = -5.0 - 3.0 * i as f64;
        let longitude = -40.0 - 2.0 * (i % 4) as f64;
        let counts: Vec<f64> = draw
            .log_dir
            .iter()
            .map(|v| ((v + log_shift).exp_m1().max(0.0) * population as f64 / DIR_SCALE).round())
            .collect();

        cities.push(CityRecord {
            city_id: city_id.clone(),
            name: format!("Synthetic City {}", i + 1),
            region: Region::ALL[i % 5],
            latitude,
            longitude,
            population,
        });
        stations.push(StationRecord {
            station_id: station_id.clone(),
            latitude: latitude + 0.05,
            longitude: longitude + 0.05,
            start_week: 1,
            climate: draw.climate,
        });
        cases.insert(
            city_id.clone(),
            WeeklySeries::new(city_id.clone(), 1, counts)?,
        );
        assignments.insert(city_id.clone(), station_id);
        manifest_cities.push(FixtureCity {
            city_id,
            incidence,
            phase_shift,
            log_shift,
            spec,
        });
    }

    let dataset = Dataset {
        cities,
        cases,
        stations,
        assignments,
        start_week: 1,
        end_week: weeks,
    };
    Ok((
        dataset,
        FixtureManifest {
            options: options.clone(),
            cities: manifest_cities,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{compute_dir, load_dataset};

    fn autocorrelation(x: &[f64], lag: usize) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        let ck: f64 = (lag..x.len()).map(|t| (x[t] - m) * (x[t - lag] - m)).sum();
        ck / c0
    }

    #[test]
    fn draws_are_reproducible() {
        let spec = SynthSpec::strongly_periodic(11);
        let a = draw_from_prior(&spec).unwrap();
        let b = draw_from_prior(&spec).unwrap();
        assert_eq!(a, b);
        let c = draw_from_prior(&SynthSpec::strongly_periodic(12)).unwrap();
        assert_ne!(a.latent, c.latent);
        assert_eq!(a.dir.len(), 209);
        assert!(a.dir.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn periodic_spec_correlates_at_one_year() {
        for seed in 0..5 {
            let d = draw_from_prior(&SynthSpec::strongly_periodic(seed)).unwrap();
            assert!(
                autocorrelation(&d.latent, 52) > autocorrelation(&d.latent, 26),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn latent_variance_matches_prior() {
        let mut spec = SynthSpec::strongly_periodic(0);
        for c in spec.covariates.iter_mut() {
            c.noise_sd = 0.0;
        }
        let week = 100;
        let reps = 200;
        let mut samples = Vec::with_capacity(reps);
        let mut prior = 0.0;
        for r in 0..reps {
            spec.seed = 1000 + r as u64;
            let d = draw_from_prior(&spec).unwrap();
            samples.push(d.latent[week - 1]);
            prior = spec
                .hyperparameters
                .prior_variance(&d.inputs[week - 1].covariates);
        }
        let m = samples.iter().sum::<f64>() / reps as f64;
        let var = samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!(
            (var / prior - 1.0).abs() < 0.15,
            "empirical {var} vs prior {prior}"
        );
    }

    #[test]
    fn fixture_loads_and_honors_options() {
        let dir = tempfile::tempdir().unwrap();
        let options = FixtureOptions {
            n_cities: 3,
            variations: vec![Incidence::Low, Incidence::Medium, Incidence::High],
            base: SynthSpec::strongly_periodic(5),
        };
        let (built, manifest) = make_multi_city_fixture(&options, dir.path()).unwrap();
        let loaded = load_dataset(&DatasetPaths::in_dir(dir.path())).unwrap();
        assert_eq!(loaded.cities.len(), 3);
        assert_eq!(loaded, built);
        assert!(dir.path().join(MANIFEST_FILE).exists());
        for c in &loaded.cities {
            assert_eq!(
                loaded.assignments[&c.city_id],
                c.city_id.replace("city", "st")
            );
        }

        let low = &manifest.cities[0];
        assert_eq!(low.incidence, Incidence::Low);
        let panel = loaded.panel(&low.city_id).unwrap();
        assert!(panel.dir.values.iter().all(|v| *v < 25.0));

        // Counts are the generator's incidence to within one rounding step.
        for fc in &manifest.cities {
            let city = loaded.city(&fc.city_id).unwrap();
            let draw = draw_with_shift(&fc.spec, &fc.city_id, fc.phase_shift).unwrap();
            let dir = compute_dir(&loaded.cases[&fc.city_id], city.population).unwrap();
            let step = DIR_SCALE / city.population as f64;
            for (got, log) in dir.values.iter().zip(&draw.log_dir) {
                let want = (log + fc.log_shift).exp_m1().max(0.0);
                assert!((got - want).abs() <= 0.5 * step + 1e-9);
            }
        }
    }

    #[test]
    fn fixture_is_deterministic() {
        let options = FixtureOptions {
            n_cities: 2,
            ..Default::default()
        };
        assert_eq!(
            build_fixture(&options).unwrap(),
            build_fixture(&options).unwrap()
        );
        assert!(build_fixture(&FixtureOptions {
            n_cities: 0,
            ..Default::default()
        })
        .is_err());
    }
}
