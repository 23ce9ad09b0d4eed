//! Exact Gaussian-process regression with the composite kernel.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    composite_kernel, cross_covariance, gram_matrix, kernel_gradients, Hyper,
    KernelHyperparameters, KernelInput, N_HYPER,
};
use crate::preprocess::TransformState;

/// First jitter tried, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-8;
/// Largest jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;
/// Predictive variances in `[-VARIANCE_CLAMP, 0)` are treated as round-off.
pub const VARIANCE_CLAMP: f64 = 1e-10;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub(crate) struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    /// Absolute jitter that was added to the diagonal (0 if none).
    pub jitter: f64,
}

/// Cholesky of a symmetric matrix, escalating diagonal jitter from
/// `1e-8` to `1e-4` times the mean diagonal by decades.
pub(crate) fn factorize(k: DMatrix<f64>) -> Result<Factor> {
    if let Some(chol) = Cholesky::new(k.clone()) {
        return Ok(Factor { chol, jitter: 0.0 });
    }
    let mean_diag = k.diagonal().mean();
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * mean_diag;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(kj) {
            return Ok(Factor { chol, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        jitter: JITTER_MAX * mean_diag,
    })
}

fn check_training(inputs: &[KernelInput], targets: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid("at least one training point is required"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("training target".into()));
    }
    Ok(())
}

/// Predictive distribution of the latent log-incidence at one query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    /// Posterior mean on the centered log scale.
    pub mean: f64,
    /// Posterior variance on the log scale.
    pub variance: f64,
    /// Point forecast back on the incidence scale.
    pub natural_mean: f64,
    pub natural_lower: f64,
    pub natural_upper: f64,
}

impl PredictiveDistribution {
    /// Builds the natural-scale point forecast and 95% band from a
    /// log-scale mean and variance; `offset` undoes the centering.
    pub fn from_log_scale(mean: f64, variance: f64, offset: f64) -> Self {
        let sd = variance.max(0.0).sqrt();
        let back = |v: f64| v.exp_m1().max(0.0);
        PredictiveDistribution {
            mean,
            variance,
            natural_mean: back(mean + offset),
            natural_lower: back(mean + offset - Z95 * sd),
            natural_upper: back(mean + offset + Z95 * sd),
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// A fitted GP: training data, the Cholesky factor of `K + σ²I` and the
/// weight vector `(K + σ²I)⁻¹ y`. Immutable once built.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    inputs: Vec<KernelInput>,
    targets: Vec<f64>,
    hyper: KernelHyperparameters,
    transform: Option<TransformState>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// JSON form of a model; the factorization is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub hyperparameters: KernelHyperparameters,
    pub transform: Option<TransformState>,
    pub training_weeks: Option<(u32, u32)>,
    pub inputs: Vec<KernelInput>,
    pub targets: Vec<f64>,
}

impl TrainedGp {
    pub fn fit(
        inputs: Vec<KernelInput>,
        targets: Vec<f64>,
        hyper: KernelHyperparameters,
    ) -> Result<Self> {
        check_training(&inputs, &targets)?;
        let k = gram_matrix(&inputs, &hyper, true)?;
        let Factor { chol, jitter } = factorize(k)?;
        let alpha = chol.solve(&DVector::from_column_slice(&targets));
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("GP weight vector".into()));
        }
        Ok(TrainedGp {
            inputs,
            targets,
            hyper,
            transform: None,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn with_transform(mut self, transform: TransformState) -> Self {
        self.transform = Some(transform);
        self
    }

    pub fn inputs(&self) -> &[KernelInput] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn hyperparameters(&self) -> &KernelHyperparameters {
        &self.hyper
    }

    pub fn transform(&self) -> Option<&TransformState> {
        self.transform.as_ref()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Diagonal jitter that was needed for the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn predict(&self, query: &KernelInput) -> Result<PredictiveDistribution> {
        let kstar = DVector::from_vec(cross_covariance(query, &self.inputs, &self.hyper));
        let prior = composite_kernel(query, query, &self.hyper);
        if !prior.is_finite() || kstar.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel evaluation at query".into()));
        }
        let mean = kstar.dot(&self.alpha);
        let mut v = kstar;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let mut variance = prior - v.norm_squared();
        if variance < 0.0 {
            if variance < -VARIANCE_CLAMP {
                return Err(Error::NegativeVariance(variance));
            }
            variance = 0.0;
        }
        let offset = self.transform.as_ref().map_or(0.0, |t| t.response_mean);
        Ok(PredictiveDistribution::from_log_scale(
            mean, variance, offset,
        ))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        lml_from_parts(&self.targets, &self.alpha, &self.chol)
    }

    pub fn to_saved(&self) -> SavedModel {
        SavedModel {
            hyperparameters: self.hyper,
            transform: self.transform.clone(),
            training_weeks: self.training_weeks(),
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    pub fn from_saved(saved: SavedModel) -> Result<Self> {
        let gp = TrainedGp::fit(saved.inputs, saved.targets, saved.hyperparameters)?;
        Ok(match saved.transform {
            Some(t) => gp.with_transform(t),
            None => gp,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_saved())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_saved(serde_json::from_str(json)?)
    }

    fn training_weeks(&self) -> Option<(u32, u32)> {
        let first = self.inputs.first()?.week;
        let last = self.inputs.last()?.week;
        (first >= 1.0 && last >= first).then_some((first as u32, last as u32))
    }
}

fn lml_from_parts(targets: &[f64], alpha: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let n = targets.len() as f64;
    let fit: f64 = targets.iter().zip(alpha.iter()).map(|(y, a)| y * a).sum();
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * fit - log_det_half - 0.5 * n * (2.0 * PI).ln()
}

/// `log p(y | X, θ)` for the zero-mean GP with observation noise.
pub fn log_marginal_likelihood(
    inputs: &[KernelInput],
    targets: &[f64],
    h: &KernelHyperparameters,
) -> Result<f64> {
    check_training(inputs, targets)?;
    let Factor { chol, .. } = factorize(gram_matrix(inputs, h, true)?)?;
    let alpha = chol.solve(&DVector::from_column_slice(targets));
    let lml = lml_from_parts(targets, &alpha, &chol);
    if !lml.is_finite() {
        return Err(Error::NonFinite("log marginal likelihood".into()));
    }
    Ok(lml)
}

/// Gradient of the log marginal likelihood with respect to every log-hyperparameter.
pub fn lml_gradient(
    inputs: &[KernelInput],
    targets: &[f64],
    h: &KernelHyperparameters,
) -> Result<[f64; N_HYPER]> {
    lml_with_gradient(inputs, targets, h).map(|(_, g)| g)
}

/// Value and gradient from a single factorization.
pub fn lml_with_gradient(
    inputs: &[KernelInput],
    targets: &[f64],
    h: &KernelHyperparameters,
) -> Result<(f64, [f64; N_HYPER])> {
    check_training(inputs, targets)?;
    let Factor { chol, .. } = factorize(gram_matrix(inputs, h, true)?)?;
    let alpha = chol.solve(&DVector::from_column_slice(targets));
    let lml = lml_from_parts(targets, &alpha, &chol);

    // W = α αᵀ - (K + σ²I)⁻¹, then ∂L/∂θ = ½ tr(W ∂K/∂θ).
    let mut w = chol.inverse();
    w.ger(1.0, &alpha, &alpha, -1.0);

    let n = inputs.len();
    let mut grad = [0.0; N_HYPER];
    for j in 0..n {
        for i in 0..=j {
            let weight = if i == j { w[(i, j)] } else { 2.0 * w[(i, j)] };
            let dk = kernel_gradients(&inputs[i], &inputs[j], h);
            for (g, d) in grad.iter_mut().zip(dk) {
                *g += weight * d;
            }
        }
    }
    grad[Hyper::NoiseVar.index()] = h.get(Hyper::NoiseVar) * w.trace();
    for g in grad.iter_mut() {
        *g *= 0.5;
    }
    if !lml.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(
            "log marginal likelihood or gradient".into(),
        ));
    }
    Ok((lml, grad))
}
