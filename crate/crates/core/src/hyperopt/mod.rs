//! Multi-restart maximization of the log marginal likelihood over the
//! log-hyperparameters.

mod ascent;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{lml_with_gradient, log_marginal_likelihood};
use crate::kernels::{Hyper, KernelHyperparameters, KernelInput, NaturalHyperparameters, N_HYPER};

pub use ascent::{minimize, projected_gradient, MinimizeResult, Problem, Termination};

/// Fewest training points accepted for fitting the full kernel.
pub const MIN_TRAINING_POINTS: usize = 30;

/// Log-space box for every hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: [f64; N_HYPER],
    pub upper: [f64; N_HYPER],
}

impl Default for Bounds {
    /// Periods in [20, 110] weeks, lengthscales in [0.5, 300], variances in [1e-6, 1e3].
    fn default() -> Self {
        let mut lower = [0.0; N_HYPER];
        let mut upper = [0.0; N_HYPER];
        for h in Hyper::ALL {
            let (lo, hi): (f64, f64) = match h {
                Hyper::Period => (20.0, 110.0),
                h if h.is_variance() => (1e-6, 1e3),
                _ => (0.5, 300.0),
            };
            lower[h.index()] = lo.ln();
            upper[h.index()] = hi.ln();
        }
        Bounds { lower, upper }
    }
}

impl Bounds {
    pub fn contains(&self, h: &KernelHyperparameters) -> bool {
        h.log_values()
            .iter()
            .enumerate()
            .all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    pub fn clamp(&self, log: [f64; N_HYPER]) -> [f64; N_HYPER] {
        std::array::from_fn(|i| log[i].clamp(self.lower[i], self.upper[i]))
    }

    fn validate(&self) -> Result<()> {
        for i in 0..N_HYPER {
            if !(self.lower[i].is_finite() && self.upper[i].is_finite())
                || self.lower[i] > self.upper[i]
            {
                return Err(Error::invalid(format!(
                    "bad bounds for {}",
                    Hyper::ALL[i].name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Max-norm of the projected log-space gradient at which a restart stops.
    pub gradient_tolerance: f64,
    pub seed: u64,
    /// Half-width of the uniform log-space perturbation for restarts after the first.
    pub init_jitter: f64,
    pub bounds: Bounds,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 5,
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            seed: 0,
            init_jitter: 0.7,
            bounds: Bounds::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 || self.max_iterations < 1 || !(self.gradient_tolerance > 0.0) {
            return Err(Error::invalid(
                "optimizer needs restarts >= 1, max_iterations >= 1 and tolerance > 0",
            ));
        }
        self.bounds.validate()
    }
}

/// Starting point for restart `restart_index`.
///
/// Restart 0 is fixed: period 52, local lengthscale 2, quasi-periodic
/// lengthscale 58, roughness 1, each signal variance a third of the target
/// variance, noise a tenth of it and linear lengthscales 30. Later restarts
/// perturb every log-parameter by `U(-jitter, jitter)` drawn from `rng`.
pub fn default_initialization(
    rng: &mut impl Rng,
    restart_index: usize,
    target_variance: f64,
    jitter: f64,
) -> KernelHyperparameters {
    let var = if target_variance.is_finite() && target_variance > 0.0 {
        target_variance
    } else {
        1.0
    };
    let base = KernelHyperparameters::new(NaturalHyperparameters {
        sigma_loc_sq: var / 3.0,
        ell_loc: 2.0,
        sigma_qp_sq: var / 3.0,
        ell_qp: 58.0,
        ell_per: 1.0,
        period: 52.0,
        sigma_lin_sq: var / 3.0,
        ell_rain: 30.0,
        ell_temp: 30.0,
        ell_hum: 30.0,
        noise_var: var / 10.0,
    })
    .expect("positive defaults");
    if restart_index == 0 {
        return base;
    }
    let log = base
        .log_values()
        .map(|v| v + rng.random_range(-jitter..=jitter));
    KernelHyperparameters::from_log(log).expect("finite perturbation")
}

/// Starting points for every restart, drawn in order from one seeded stream.
pub fn initializations(
    config: &OptimizerConfig,
    target_variance: f64,
) -> Vec<KernelHyperparameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.restarts)
        .map(|r| {
            let h = default_initialization(&mut rng, r, target_variance, config.init_jitter);
            KernelHyperparameters::from_log(config.bounds.clamp(h.log_values()))
                .expect("bounds are finite")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartDiagnostics {
    pub restart: usize,
    pub initial: KernelHyperparameters,
    pub initial_lml: Option<f64>,
    pub final_hyperparameters: Option<KernelHyperparameters>,
    pub final_lml: Option<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Log marginal likelihood after every accepted step (non-decreasing).
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub hyperparameters: KernelHyperparameters,
    pub lml: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartDiagnostics>,
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// Maximizes the log marginal likelihood from a single starting point.
pub fn ascend(
    inputs: &[KernelInput],
    targets: &[f64],
    start: &KernelHyperparameters,
    config: &OptimizerConfig,
    restart: usize,
) -> RestartDiagnostics {
    let value = |x: &[f64]| {
        let h = KernelHyperparameters::from_log(x.try_into().ok()?).ok()?;
        log_marginal_likelihood(inputs, targets, &h)
            .ok()
            .map(|v| -v)
    };
    let value_and_gradient = |x: &[f64]| {
        let h = KernelHyperparameters::from_log(x.try_into().ok()?).ok()?;
        let (v, g) = lml_with_gradient(inputs, targets, &h).ok()?;
        Some((-v, g.iter().map(|gi| -gi).collect()))
    };
    let problem = Problem {
        value: &value,
        value_and_gradient: &value_and_gradient,
        lower: &config.bounds.lower,
        upper: &config.bounds.upper,
    };
    let r = minimize(
        &problem,
        &start.log_values(),
        config.max_iterations,
        config.gradient_tolerance,
    );
    let ok = r.termination != Termination::InitialEvaluationFailed;
    let final_h = ok
        .then(|| KernelHyperparameters::from_log(r.x.as_slice().try_into().unwrap()).ok())
        .flatten();
    RestartDiagnostics {
        restart,
        initial: *start,
        initial_lml: r.trajectory.first().map(|v| -v),
        final_hyperparameters: final_h,
        final_lml: final_h.map(|_| -r.value),
        iterations: r.iterations,
        termination: r.termination,
        trajectory: r.trajectory.iter().map(|v| -v).collect(),
    }
}

pub fn optimize(
    inputs: &[KernelInput],
    targets: &[f64],
    config: &OptimizerConfig,
) -> Result<OptimizationResult> {
    config.validate()?;
    if inputs.len() != targets.len() {
        return Err(Error::invalid("inputs and targets differ in length"));
    }
    if inputs.len() < MIN_TRAINING_POINTS {
        return Err(Error::invalid(format!(
            "hyperparameter optimization needs at least {MIN_TRAINING_POINTS} points, got {}",
            inputs.len()
        )));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("training target".into()));
    }
    let starts = initializations(config, population_variance(targets));
    let restarts: Vec<RestartDiagnostics> = starts
        .par_iter()
        .enumerate()
        .map(|(i, h)| ascend(inputs, targets, h, config, i))
        .collect();

    let best = restarts
        .iter()
        .filter_map(|r| Some((r.final_lml?, r.restart, r.final_hyperparameters?)))
        .filter(|(l, _, _)| l.is_finite())
        .fold(
            None::<(f64, usize, KernelHyperparameters)>,
            |acc, cand| match acc {
                Some(a) if a.0 >= cand.0 => Some(a),
                _ => Some(cand),
            },
        );
    let Some((lml, best_restart, hyperparameters)) = best else {
        return Err(Error::Optimization(
            "every restart failed to evaluate the likelihood".into(),
        ));
    };
    Ok(OptimizationResult {
        hyperparameters,
        lml,
        best_restart,
        restarts,
    })
}
