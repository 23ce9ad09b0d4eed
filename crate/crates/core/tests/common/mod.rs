//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's numerics: kernels are written out
//! from their closed forms and linear algebra uses explicit inverses and
//! determinants.

#![allow(dead_code)]

use std::f64::consts::PI;

use dengue_gp::kernels::{KernelHyperparameters, KernelInput, NaturalHyperparameters};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo.ln()..hi.ln()).exp()
}

pub fn random_hyper(r: &mut ChaCha8Rng) -> KernelHyperparameters {
    KernelHyperparameters::new(NaturalHyperparameters {
        sigma_loc_sq: log_uniform(r, 0.05, 2.0),
        ell_loc: log_uniform(r, 1.0, 20.0),
        sigma_qp_sq: log_uniform(r, 0.1, 3.0),
        ell_qp: log_uniform(r, 10.0, 300.0),
        ell_per: log_uniform(r, 0.3, 3.0),
        period: log_uniform(r, 30.0, 80.0),
        sigma_lin_sq: log_uniform(r, 0.01, 1.0),
        ell_rain: log_uniform(r, 0.5, 5.0),
        ell_temp: log_uniform(r, 0.5, 5.0),
        ell_hum: log_uniform(r, 0.5, 5.0),
        noise_var: log_uniform(r, 0.01, 0.5),
    })
    .unwrap()
}

pub fn random_input(r: &mut ChaCha8Rng, week: f64) -> KernelInput {
    KernelInput::new(week, std::array::from_fn(|_| r.sample(StandardNormal))).unwrap()
}

/// One input at a random week in `[0, max_week)`.
pub fn random_point(r: &mut ChaCha8Rng, max_week: f64) -> KernelInput {
    let w = r.random_range(0.0..max_week);
    random_input(r, w)
}

/// `n` inputs at random weeks in `[0, 150)`.
pub fn random_inputs(r: &mut ChaCha8Rng, n: usize) -> Vec<KernelInput> {
    (0..n).map(|_| random_point(r, 150.0)).collect()
}

pub fn random_targets(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

fn matern52(r: f64, var: f64, ell: f64) -> f64 {
    let a = 5f64.sqrt() * r / ell;
    var * (1.0 + a + 5.0 * r * r / (3.0 * ell * ell)) * (-a).exp()
}

/// The composite covariance written out term by term.
pub fn kernel(a: &KernelInput, b: &KernelInput, h: &NaturalHyperparameters) -> f64 {
    let r = (a.week - b.week).abs();
    let local = matern52(r, h.sigma_loc_sq, h.ell_loc);
    let per = (-2.0 * (PI * r / h.period).sin().powi(2) / h.ell_per.powi(2)).exp();
    let quasi = matern52(r, h.sigma_qp_sq, h.ell_qp) * per;
    let ells = [h.ell_rain, h.ell_temp, h.ell_hum];
    let lin = h.sigma_lin_sq
        + (0..3)
            .map(|d| a.covariates[d] * b.covariates[d] / ells[d].powi(2))
            .sum::<f64>();
    local + quasi + lin
}

pub fn gram(inputs: &[KernelInput], h: &NaturalHyperparameters, noise: bool) -> DMatrix<f64> {
    let n = inputs.len();
    DMatrix::from_fn(n, n, |i, j| {
        kernel(&inputs[i], &inputs[j], h) + if noise && i == j { h.noise_var } else { 0.0 }
    })
}

/// Posterior mean and latent variance by explicit inversion.
pub fn condition(
    inputs: &[KernelInput],
    targets: &[f64],
    h: &NaturalHyperparameters,
    query: &KernelInput,
) -> (f64, f64) {
    let kinv = gram(inputs, h, true).try_inverse().expect("invertible");
    let ks = DVector::from_iterator(inputs.len(), inputs.iter().map(|x| kernel(query, x, h)));
    let y = DVector::from_column_slice(targets);
    let mean = (ks.transpose() * &kinv * y)[0];
    let var = kernel(query, query, h) - (ks.transpose() * &kinv * &ks)[0];
    (mean, var)
}

/// Multivariate normal log density via the explicit determinant.
pub fn mvn_log_density(inputs: &[KernelInput], targets: &[f64], h: &NaturalHyperparameters) -> f64 {
    let k = gram(inputs, h, true);
    let det = k.determinant();
    let kinv = k.try_inverse().expect("invertible");
    let y = DVector::from_column_slice(targets);
    let quad = (y.transpose() * kinv * &y)[0];
    -0.5 * quad - 0.5 * det.ln() - 0.5 * targets.len() as f64 * (2.0 * PI).ln()
}

/// Relative agreement with a small absolute floor for gradients that vanish.
pub fn rel_close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + floor
}

/// Central difference in log space of `f` with respect to coordinate `k`.
pub fn central_diff(
    h: &KernelHyperparameters,
    k: usize,
    step: f64,
    f: impl Fn(&KernelHyperparameters) -> f64,
) -> f64 {
    let mut up = h.log_values();
    let mut dn = up;
    up[k] += step;
    dn[k] -= step;
    let fu = f(&KernelHyperparameters::from_log(up).unwrap());
    let fd = f(&KernelHyperparameters::from_log(dn).unwrap());
    (fu - fd) / (2.0 * step)
}

/// AUC by counting every (positive, negative) pair; ties count one half.
pub fn pair_count_auc(labels: &[bool], scores: &[f64]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            num += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

/// Pearson correlation straight from its definition.
pub fn pearson_definition(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}
