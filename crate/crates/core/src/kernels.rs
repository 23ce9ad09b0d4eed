//! The three-part covariance function used by the forecaster:
//!
//! ```text
//! k(a, b) = k_loc(dt) + k_qp(dt) * k_per(dt) + k_lin(x_a, x_b)
//! ```
//!
//! where `k_loc` and `k_qp` are Matérn-5/2 envelopes over the week distance
//! `dt = |t_a - t_b|`, `k_per` is an exp-sine-squared periodic factor and
//! `k_lin` is a linear kernel over the standardized weather covariates with
//! one lengthscale per covariate. Observation noise is added on the diagonal
//! of the Gram matrix only.
//!
//! Hyperparameters live in log space so that gradient ascent is unconstrained;
//! every derivative reported here is with respect to the logarithm.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_HYPER: usize = 11;
pub const N_COVARIATES: usize = 3;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Index of each hyperparameter inside [`KernelHyperparameters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hyper {
    SigmaLocSq,
    EllLoc,
    SigmaQpSq,
    EllQp,
    EllPer,
    Period,
    SigmaLinSq,
    EllRain,
    EllTemp,
    EllHum,
    NoiseVar,
}

impl Hyper {
    pub const ALL: [Hyper; N_HYPER] = [
        Hyper::SigmaLocSq,
        Hyper::EllLoc,
        Hyper::SigmaQpSq,
        Hyper::EllQp,
        Hyper::EllPer,
        Hyper::Period,
        Hyper::SigmaLinSq,
        Hyper::EllRain,
        Hyper::EllTemp,
        Hyper::EllHum,
        Hyper::NoiseVar,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Hyper::SigmaLocSq => "sigma_loc_sq",
            Hyper::EllLoc => "ell_loc",
            Hyper::SigmaQpSq => "sigma_qp_sq",
            Hyper::EllQp => "ell_qp",
            Hyper::EllPer => "ell_per",
            Hyper::Period => "period",
            Hyper::SigmaLinSq => "sigma_lin_sq",
            Hyper::EllRain => "ell_rain",
            Hyper::EllTemp => "ell_temp",
            Hyper::EllHum => "ell_hum",
            Hyper::NoiseVar => "noise_var",
        }
    }

    pub fn is_variance(self) -> bool {
        matches!(
            self,
            Hyper::SigmaLocSq | Hyper::SigmaQpSq | Hyper::SigmaLinSq | Hyper::NoiseVar
        )
    }
}

/// Natural-scale view of the hyperparameters; this is also the JSON form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalHyperparameters {
    pub sigma_loc_sq: f64,
    pub ell_loc: f64,
    pub sigma_qp_sq: f64,
    pub ell_qp: f64,
    pub ell_per: f64,
    pub period: f64,
    pub sigma_lin_sq: f64,
    pub ell_rain: f64,
    pub ell_temp: f64,
    pub ell_hum: f64,
    pub noise_var: f64,
}

impl NaturalHyperparameters {
    fn to_array(self) -> [f64; N_HYPER] {
        [
            self.sigma_loc_sq,
            self.ell_loc,
            self.sigma_qp_sq,
            self.ell_qp,
            self.ell_per,
            self.period,
            self.sigma_lin_sq,
            self.ell_rain,
            self.ell_temp,
            self.ell_hum,
            self.noise_var,
        ]
    }

    fn from_array(v: [f64; N_HYPER]) -> Self {
        NaturalHyperparameters {
            sigma_loc_sq: v[0],
            ell_loc: v[1],
            sigma_qp_sq: v[2],
            ell_qp: v[3],
            ell_per: v[4],
            period: v[5],
            sigma_lin_sq: v[6],
            ell_rain: v[7],
            ell_temp: v[8],
            ell_hum: v[9],
            noise_var: v[10],
        }
    }
}

/// The ten kernel hyperparameters plus the observation noise variance.
///
/// Stored as logarithms; the natural values are cached alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "NaturalHyperparameters", try_from = "NaturalHyperparameters")]
pub struct KernelHyperparameters {
    log: [f64; N_HYPER],
    nat: [f64; N_HYPER],
}

impl KernelHyperparameters {
    pub fn new(natural: NaturalHyperparameters) -> Result<Self> {
        let nat = natural.to_array();
        for (h, v) in Hyper::ALL.iter().zip(nat) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "hyperparameter {} must be finite and positive, got {v}",
                    h.name()
                )));
            }
        }
        Ok(KernelHyperparameters {
            log: nat.map(f64::ln),
            nat,
        })
    }

    pub fn from_log(log: [f64; N_HYPER]) -> Result<Self> {
        if let Some(i) = log.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "log {} = {}",
                Hyper::ALL[i].name(),
                log[i]
            )));
        }
        let nat = log.map(f64::exp);
        if let Some(i) = nat.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonFinite(format!(
                "{} = {} after exponentiation",
                Hyper::ALL[i].name(),
                nat[i]
            )));
        }
        Ok(KernelHyperparameters { log, nat })
    }

    pub fn log_values(&self) -> [f64; N_HYPER] {
        self.log
    }

    pub fn values(&self) -> [f64; N_HYPER] {
        self.nat
    }

    pub fn natural(&self) -> NaturalHyperparameters {
        NaturalHyperparameters::from_array(self.nat)
    }

    pub fn get(&self, h: Hyper) -> f64 {
        self.nat[h.index()]
    }

    pub fn log_of(&self, h: Hyper) -> f64 {
        self.log[h.index()]
    }

    /// Copy with one hyperparameter replaced (natural scale).
    pub fn with(&self, h: Hyper, value: f64) -> Result<Self> {
        let mut n = self.nat;
        n[h.index()] = value;
        Self::new(NaturalHyperparameters::from_array(n))
    }

    pub fn linear_lengthscales(&self) -> [f64; N_COVARIATES] {
        [
            self.get(Hyper::EllRain),
            self.get(Hyper::EllTemp),
            self.get(Hyper::EllHum),
        ]
    }

    /// Prior variance of the latent function at a point with covariates `x`.
    pub fn prior_variance(&self, x: &[f64; N_COVARIATES]) -> f64 {
        let p = KernelInput {
            week: 0.0,
            covariates: *x,
        };
        composite_kernel(&p, &p, self)
    }
}

impl From<KernelHyperparameters> for NaturalHyperparameters {
    fn from(h: KernelHyperparameters) -> Self {
        h.natural()
    }
}

impl TryFrom<NaturalHyperparameters> for KernelHyperparameters {
    type Error = Error;

    fn try_from(n: NaturalHyperparameters) -> Result<Self> {
        KernelHyperparameters::new(n)
    }
}

/// One observation point: its week index and the standardized
/// (rain, temperature, humidity) covariates attached to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelInput {
    pub week: f64,
    pub covariates: [f64; N_COVARIATES],
}

impl KernelInput {
    pub fn new(week: f64, covariates: [f64; N_COVARIATES]) -> Result<Self> {
        if !week.is_finite() || covariates.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!(
                "kernel input at week {week} has non-finite entries"
            )));
        }
        Ok(KernelInput { week, covariates })
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must be finite and positive, got {v}"
        )))
    }
}

/// Matérn-5/2 profile `(1 + u + u²/3) e^{-u}` with `u = √5 dt / ℓ`.
#[inline]
fn matern_profile(dt: f64, lengthscale: f64) -> f64 {
    let u = SQRT5 * dt / lengthscale;
    (1.0 + u + u * u / 3.0) * (-u).exp()
}

/// d profile / d log ℓ = (u²/3)(1 + u) e^{-u}.
#[inline]
fn matern_profile_dlog_ell(dt: f64, lengthscale: f64) -> f64 {
    let u = SQRT5 * dt / lengthscale;
    u * u / 3.0 * (1.0 + u) * (-u).exp()
}

pub fn matern52(dt: f64, variance: f64, lengthscale: f64) -> Result<f64> {
    check_positive("variance", variance)?;
    check_positive("lengthscale", lengthscale)?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::invalid(format!(
            "dt must be finite and >= 0, got {dt}"
        )));
    }
    Ok(variance * matern_profile(dt, lengthscale))
}

pub fn periodic(dt: f64, period: f64, roughness: f64) -> Result<f64> {
    check_positive("period", period)?;
    check_positive("roughness", roughness)?;
    if !dt.is_finite() {
        return Err(Error::invalid("dt must be finite"));
    }
    Ok(periodic_unchecked(dt, period, roughness))
}

#[inline]
fn periodic_unchecked(dt: f64, period: f64, roughness: f64) -> f64 {
    let s = (PI * dt / period).sin();
    (-2.0 * s * s / (roughness * roughness)).exp()
}

pub fn linear_ard(xi: &[f64], xj: &[f64], bias: f64, lengthscales: &[f64]) -> Result<f64> {
    if xi.len() != xj.len() || xi.len() != lengthscales.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} / {} / {} lengthscales",
            xi.len(),
            xj.len(),
            lengthscales.len()
        )));
    }
    if !(bias.is_finite() && bias >= 0.0) {
        return Err(Error::invalid(format!("bias must be >= 0, got {bias}")));
    }
    for &l in lengthscales {
        check_positive("lengthscale", l)?;
    }
    Ok(linear_unchecked(xi, xj, bias, lengthscales))
}

#[inline]
fn linear_unchecked(xi: &[f64], xj: &[f64], bias: f64, lengthscales: &[f64]) -> f64 {
    bias + xi
        .iter()
        .zip(xj)
        .zip(lengthscales)
        .map(|((a, b), l)| a * b / (l * l))
        .sum::<f64>()
}

pub fn composite_kernel(a: &KernelInput, b: &KernelInput, h: &KernelHyperparameters) -> f64 {
    let n = &h.nat;
    let dt = (a.week - b.week).abs();
    let local = n[0] * matern_profile(dt, n[1]);
    let quasi = n[2] * matern_profile(dt, n[3]) * periodic_unchecked(dt, n[5], n[4]);
    let linear = linear_unchecked(&a.covariates, &b.covariates, n[6], &n[7..10]);
    local + quasi + linear
}

/// Covariance matrix over `inputs`; symmetric by construction.
pub fn gram_matrix(
    inputs: &[KernelInput],
    h: &KernelHyperparameters,
    include_noise: bool,
) -> Result<DMatrix<f64>> {
    if inputs.is_empty() {
        return Err(Error::invalid("gram matrix needs at least one input"));
    }
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = composite_kernel(&inputs[i], &inputs[j], h);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    if include_noise {
        let noise = h.get(Hyper::NoiseVar);
        for i in 0..n {
            k[(i, i)] += noise;
        }
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gram matrix entry".into()));
    }
    Ok(k)
}

/// Cross-covariance between a query point and each of `inputs`.
pub fn cross_covariance(
    query: &KernelInput,
    inputs: &[KernelInput],
    h: &KernelHyperparameters,
) -> Vec<f64> {
    inputs
        .iter()
        .map(|x| composite_kernel(query, x, h))
        .collect()
}

/// `∂k(a, b)/∂ log θ` for every hyperparameter θ, in [`Hyper`] order.
///
/// The noise entry is always zero: noise only enters through the Gram diagonal.
pub fn kernel_gradients(
    a: &KernelInput,
    b: &KernelInput,
    h: &KernelHyperparameters,
) -> [f64; N_HYPER] {
    let n = &h.nat;
    let dt = (a.week - b.week).abs();
    let mut g = [0.0; N_HYPER];

    g[0] = n[0] * matern_profile(dt, n[1]);
    g[1] = n[0] * matern_profile_dlog_ell(dt, n[1]);

    let m_qp = matern_profile(dt, n[3]);
    let (ell_per, p) = (n[4], n[5]);
    let arg = PI * dt / p;
    let s = arg.sin();
    let per = (-2.0 * s * s / (ell_per * ell_per)).exp();
    g[2] = n[2] * m_qp * per;
    g[3] = n[2] * matern_profile_dlog_ell(dt, n[3]) * per;
    g[4] = n[2] * m_qp * per * 4.0 * s * s / (ell_per * ell_per);
    g[5] = n[2] * m_qp * per * 2.0 * arg * (2.0 * arg).sin() / (ell_per * ell_per);

    g[6] = n[6];
    for d in 0..N_COVARIATES {
        let l = n[7 + d];
        g[7 + d] = -2.0 * a.covariates[d] * b.covariates[d] / (l * l);
    }
    g
}
