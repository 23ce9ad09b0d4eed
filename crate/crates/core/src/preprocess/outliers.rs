//! Additive-outlier cleaning against an autoregressive fit.
//!
//! Works on `ln(1 + x)`. Each round picks an AR order by AIC, computes the
//! additive-outlier t-ratio at every week, adjusts the single most extreme
//! week if it exceeds the critical value, and refits. Stops when nothing
//! exceeds the threshold or after [`MAX_ITERATIONS`] rounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::WeeklySeries;
use crate::error::{Error, Result};

pub const DEFAULT_CRITICAL_VALUE: f64 = 3.5;
pub const MAX_ITERATIONS: usize = 10;
pub const MIN_LENGTH: usize = 20;
pub const MAX_AR_ORDER: usize = 4;

const MAD_TO_SD: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub series: WeeklySeries,
    /// Sorted, without duplicates.
    pub flagged_weeks: Vec<u32>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct ArFit {
    #[allow(dead_code)]
    pub intercept: f64,
    pub phi: Vec<f64>,
    /// `residuals[k]` belongs to time `start + k`.
    pub residuals: Vec<f64>,
    pub start: usize,
}

impl ArFit {
    pub fn residual_variance(&self) -> f64 {
        self.residuals.iter().map(|e| e * e).sum::<f64>() / self.residuals.len() as f64
    }
}

/// Conditional least squares AR(p) with intercept over times `start..n`.
pub(crate) fn fit_ar(z: &[f64], order: usize, start: usize) -> Option<ArFit> {
    let start = start.max(order);
    let rows = z.len().checked_sub(start)?;
    if rows <= order + 1 {
        return None;
    }
    let x = DMatrix::from_fn(
        rows,
        order + 1,
        |r, c| {
            if c == 0 {
                1.0
            } else {
                z[start + r - c]
            }
        },
    );
    let y = DVector::from_iterator(rows, z[start..].iter().copied());
    let xtx = x.transpose() * &x;
    let beta = xtx.cholesky()?.solve(&(x.transpose() * &y));
    if beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let residuals = (y - &x * &beta).iter().copied().collect();
    Some(ArFit {
        intercept: beta[0],
        phi: beta.iter().skip(1).copied().collect(),
        residuals,
        start,
    })
}

fn select_order(z: &[f64]) -> Option<usize> {
    let n_eff = (z.len() - MAX_AR_ORDER) as f64;
    (1..=MAX_AR_ORDER)
        .filter_map(|p| {
            let fit = fit_ar(z, p, MAX_AR_ORDER)?;
            let aic = n_eff * fit.residual_variance().ln() + 2.0 * (p as f64 + 1.0);
            Some((aic, p))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, p)| p)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn robust_scale(residuals: &[f64]) -> f64 {
    let mut r = residuals.to_vec();
    let med = median(&mut r);
    let mut dev: Vec<f64> = residuals.iter().map(|e| (e - med).abs()).collect();
    let mad = MAD_TO_SD * median(&mut dev);
    if mad > 0.0 {
        mad
    } else {
        let n = residuals.len() as f64;
        (residuals.iter().map(|e| e * e).sum::<f64>() / n).sqrt()
    }
}

/// Estimated outlier size and t-ratio for an additive outlier at every time.
pub(crate) fn ao_statistics(fit: &ArFit, n: usize) -> Vec<(f64, f64)> {
    let sigma = robust_scale(&fit.residuals);
    let mut pi = vec![1.0];
    pi.extend(fit.phi.iter().map(|p| -p));
    (0..n)
        .map(|t| {
            let (mut num, mut den) = (0.0, 0.0);
            for (j, pj) in pi.iter().enumerate() {
                let s = t + j;
                if s >= fit.start && s < n {
                    num += pj * fit.residuals[s - fit.start];
                    den += pj * pj;
                }
            }
            if den == 0.0 || sigma == 0.0 {
                return (0.0, 0.0);
            }
            let omega = num / den;
            (omega, omega * den.sqrt() / sigma)
        })
        .collect()
}

pub fn remove_additive_outliers(
    series: &WeeklySeries,
    critical_value: f64,
) -> Result<OutlierReport> {
    if series.len() < MIN_LENGTH {
        return Err(Error::invalid(format!(
            "outlier removal needs at least {MIN_LENGTH} weeks, got {}",
            series.len()
        )));
    }
    if !(critical_value > 0.0) {
        return Err(Error::invalid("critical value must be positive"));
    }
    if let Some(v) = series.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("series value {v}")));
    }
    if let Some(v) = series.values.iter().find(|v| **v < 0.0) {
        return Err(Error::invalid(format!("negative series value {v}")));
    }

    let mut z: Vec<f64> = series.values.iter().map(|v| v.ln_1p()).collect();
    let n = z.len();
    let mut adjusted = vec![false; n];
    let mut iterations = 0;

    let (lo, hi) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi - lo > 1e-12 {
        while iterations < MAX_ITERATIONS {
            let Some(order) = select_order(&z) else { break };
            let Some(fit) = fit_ar(&z, order, order) else {
                break;
            };
            let stats = ao_statistics(&fit, n);
            let Some((t, &(omega, tau))) = stats
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .1.abs().total_cmp(&b.1 .1.abs()).then(b.0.cmp(&a.0)))
            else {
                break;
            };
            if !(tau.abs() > critical_value) {
                break;
            }
            iterations += 1;
            z[t] -= omega;
            adjusted[t] = true;
        }
    }

    let values = series
        .values
        .iter()
        .zip(&z)
        .zip(&adjusted)
        .map(|((&orig, &zz), &adj)| if adj { zz.exp_m1().max(0.0) } else { orig })
        .collect();
    let flagged_weeks = (0..n)
        .filter(|&i| adjusted[i])
        .map(|i| series.week_of(i))
        .collect();
    Ok(OutlierReport {
        series: WeeklySeries {
            city_id: series.city_id.clone(),
            start_week: series.start_week,
            values,
        },
        flagged_weeks,
        iterations,
    })
}
