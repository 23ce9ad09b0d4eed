//! Comparison models: ordinary least squares on the lagged weather covariates
//! and a windowed AR(1) iterated out to the forecast horizon. Both work on
//! `ln(1 + DIR)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::WeeklySeries;
use crate::error::{Error, Result};
use crate::kernels::N_COVARIATES;
use crate::preprocess::CovariateMatrix;

pub const AR_WINDOW: u32 = 12;
pub const LM_MIN_ROWS: usize = 5;
pub const AR_MIN_PAIRS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModelState {
    pub intercept: f64,
    pub coefficients: [f64; N_COVARIATES],
    /// Mean squared residual over the training rows.
    pub residual_variance: f64,
}

/// OLS of `targets` on `[1, covariates]` over weeks present in both and `<= training_end`.
pub fn lm_fit(
    covariates: &CovariateMatrix,
    targets: &WeeklySeries,
    training_end: u32,
) -> Result<LinearModelState> {
    let weeks: Vec<u32> = (targets.start_week..=training_end.min(targets.end_week()))
        .filter(|w| covariates.get(*w).is_some())
        .collect();
    if weeks.len() < LM_MIN_ROWS {
        return Err(Error::invalid(format!(
            "linear model needs at least {LM_MIN_ROWS} training rows, got {}",
            weeks.len()
        )));
    }
    let n = weeks.len();
    let x = DMatrix::from_fn(n, N_COVARIATES + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            covariates.get(weeks[r]).unwrap()[c - 1]
        }
    });
    let y = DVector::from_iterator(n, weeks.iter().map(|w| targets.get(*w).unwrap()));

    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if r.diagonal()
        .iter()
        .any(|d| d.abs() <= 1e-10 * rmax.max(1e-300))
    {
        return Err(Error::invalid("rank-deficient design matrix"));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::invalid("rank-deficient design matrix"))?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("linear model coefficient".into()));
    }
    let resid = &y - &x * &beta;
    Ok(LinearModelState {
        intercept: beta[0],
        coefficients: std::array::from_fn(|d| beta[d + 1]),
        residual_variance: resid.norm_squared() / n as f64,
    })
}

pub fn lm_predict(state: &LinearModelState, x: &[f64; N_COVARIATES]) -> f64 {
    state.intercept
        + state
            .coefficients
            .iter()
            .zip(x)
            .map(|(c, v)| c * v)
            .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArModelState {
    pub phi: f64,
    pub intercept: f64,
    pub window: u32,
    /// Residual variance with `n - 2` degrees of freedom (0 for an exact fit).
    pub residual_variance: f64,
}

/// OLS of `y[t]` on `y[t-1]` using only pairs inside the 12 weeks ending at `fit_end_week`.
pub fn ar_fit(targets: &WeeklySeries, fit_end_week: u32) -> Result<ArModelState> {
    let first = targets
        .start_week
        .max((fit_end_week + 1).saturating_sub(AR_WINDOW));
    let last = fit_end_week.min(targets.end_week());
    let pairs: Vec<(f64, f64)> = (first + 1..=last)
        .map(|t| (targets.get(t - 1).unwrap(), targets.get(t).unwrap()))
        .collect();
    if pairs.len() < AR_MIN_PAIRS {
        return Err(Error::invalid(format!(
            "AR fit needs at least {AR_MIN_PAIRS} pairs in the window, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-14 * (1.0 + mx * mx) * n) {
        return Err(Error::invalid(
            "constant AR window (zero regressor variance)",
        ));
    }
    let phi = sxy / sxx;
    let intercept = my - phi * mx;
    let sse: f64 = pairs
        .iter()
        .map(|(x, y)| (y - intercept - phi * x).powi(2))
        .sum();
    Ok(ArModelState {
        phi,
        intercept,
        window: AR_WINDOW,
        residual_variance: if n > 2.0 { sse / (n - 2.0) } else { 0.0 },
    })
}

/// Iterates `y <- intercept + phi * y` `steps` times from `last_observed`.
pub fn ar_forecast(state: &ArModelState, last_observed: f64, steps: u32) -> f64 {
    (0..steps).fold(last_observed, |y, _| state.intercept + state.phi * y)
}

pub fn ar_forecast4(state: &ArModelState, last_observed: f64) -> f64 {
    ar_forecast(state, last_observed, 4)
}

/// Forecast-error variance after `steps` iterations, ignoring parameter uncertainty.
pub fn ar_forecast_variance(state: &ArModelState, steps: u32) -> f64 {
    let phi2 = state.phi * state.phi;
    state.residual_variance * (0..steps).map(|k| phi2.powi(k as i32)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(v: Vec<f64>) -> WeeklySeries {
        WeeklySeries::new("c", 1, v).unwrap()
    }

    fn random_cov(rng: &mut ChaCha8Rng, n: usize) -> CovariateMatrix {
        CovariateMatrix {
            start_week: 1,
            rows: (0..n)
                .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
                .collect(),
        }
    }

    /// Independent oracle: (XᵀX)⁻¹Xᵀy with an explicit inverse.
    fn normal_equations(cov: &CovariateMatrix, y: &[f64], n: usize) -> DVector<f64> {
        let x = DMatrix::from_fn(n, 4, |r, c| if c == 0 { 1.0 } else { cov.rows[r][c - 1] });
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        xtx_inv * x.transpose() * DVector::from_column_slice(&y[..n])
    }

    #[test]
    fn exact_linear_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = random_cov(&mut rng, 30);
        let y: Vec<f64> = cov
            .rows
            .iter()
            .map(|r| 1.5 + 0.3 * r[0] - 2.0 * r[1] + 0.7 * r[2])
            .collect();
        let fit = lm_fit(&cov, &series(y.clone()), 30).unwrap();
        assert!(fit.residual_variance.sqrt() <= 1e-10);
        assert!((fit.intercept - 1.5).abs() < 1e-10);
        for (i, r) in cov.rows.iter().enumerate() {
            assert!((lm_predict(&fit, r) - y[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cov = random_cov(&mut rng, 10);
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..5.0)).collect();
        let fit = lm_fit(&cov, &series(y.clone()), 10).unwrap();
        let beta = normal_equations(&cov, &y, 10);
        assert!((fit.intercept - beta[0]).abs() < 1e-8);
        for d in 0..3 {
            assert!((fit.coefficients[d] - beta[d + 1]).abs() < 1e-8);
        }
    }

    #[test]
    fn independent_targets_give_small_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 400;
        let cov = random_cov(&mut rng, n);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fit = lm_fit(&cov, &series(y.clone()), n as u32).unwrap();
        let beta = normal_equations(&cov, &y, n);
        // Uniform(-1,1) noise has sd 0.577; covariates have sd 1.155, so the
        // OLS standard error is about 0.577 / (1.155 * 20) = 0.025.
        for d in 0..3 {
            assert!((fit.coefficients[d] - beta[d + 1]).abs() < 1e-10);
            assert!(fit.coefficients[d].abs() < 4.0 * 0.025);
        }
    }

    #[test]
    fn lm_uses_training_rows_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cov = random_cov(&mut rng, 40);
        let mut y: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..3.0)).collect();
        let a = lm_fit(&cov, &series(y.clone()), 30).unwrap();
        for v in y.iter_mut().skip(30) {
            *v = 1e9;
        }
        assert_eq!(a, lm_fit(&cov, &series(y), 30).unwrap());
    }

    #[test]
    fn lm_rejects_rank_deficient_and_short() {
        let cov = CovariateMatrix {
            start_week: 1,
            rows: (0..10).map(|i| [i as f64, 2.0 * i as f64, 1.0]).collect(),
        };
        assert!(lm_fit(&cov, &series(vec![1.0; 10]), 10).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cov = random_cov(&mut rng, 4);
        assert!(lm_fit(&cov, &series(vec![1.0; 4]), 4).is_err());
    }

    #[test]
    fn lm_predict_is_affine() {
        let state = LinearModelState {
            intercept: 0.5,
            coefficients: [1.0, -2.0, 0.25],
            residual_variance: 0.0,
        };
        assert_eq!(lm_predict(&state, &[0.0; 3]), 0.5);
        assert_eq!(lm_predict(&state, &[2.0, 1.0, 4.0]), 0.5 + 2.0 - 2.0 + 1.0);
        let base = lm_predict(&state, &[0.3, 0.1, -0.2]);
        let bumped = lm_predict(&state, &[1.3, 0.1, -0.2]);
        assert!((bumped - base - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ar_exact_recovery() {
        let mut y = vec![5.0];
        for _ in 0..19 {
            y.push(0.8 * y.last().unwrap());
        }
        let s = ar_fit(&series(y), 20).unwrap();
        assert!((s.phi - 0.8).abs() < 1e-10);
        assert!(s.intercept.abs() < 1e-10);
        assert_eq!(s.window, 12);
    }

    #[test]
    fn ar_window_ignores_older_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..4.0)).collect();
        let a = ar_fit(&series(y.clone()), 35).unwrap();
        let mut mutated = y;
        for v in mutated.iter_mut().take(35 - 12) {
            *v = -100.0;
        }
        assert_eq!(a, ar_fit(&series(mutated), 35).unwrap());
    }

    #[test]
    fn ar_matches_covariance_ratio() {
        let y = vec![1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 3.5, 2.5, 4.5, 5.5, 3.0, 2.0];
        let s = ar_fit(&series(y.clone()), 12).unwrap();
        let xs = &y[..11];
        let ys = &y[1..];
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(xs), mean(ys));
        let cov: f64 = xs
            .iter()
            .zip(ys)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>()
            / 11.0;
        let var: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / 11.0;
        assert!((s.phi - cov / var).abs() < 1e-12);
        assert!((s.intercept - (my - cov / var * mx)).abs() < 1e-12);
    }

    #[test]
    fn ar_rejects_constant_and_short_windows() {
        assert!(ar_fit(&series(vec![2.0; 20]), 20).is_err());
        assert!(ar_fit(&series(vec![1.0, 2.0, 3.0]), 3).is_err());
    }

    #[test]
    fn forecast_closed_forms() {
        let rw = ArModelState {
            phi: 1.0,
            intercept: 0.0,
            window: 12,
            residual_variance: 0.0,
        };
        assert_eq!(ar_forecast4(&rw, 3.3), 3.3);
        let mr = ArModelState {
            phi: 0.0,
            intercept: 1.2,
            window: 12,
            residual_variance: 0.0,
        };
        assert_eq!(ar_forecast4(&mr, 9.0), 1.2);
        let s = ArModelState {
            phi: 0.5,
            intercept: 1.0,
            window: 12,
            residual_variance: 0.0,
        };
        let closed = 1.0 * (1.0 - 0.5f64.powi(4)) / (1.0 - 0.5) + 0.5f64.powi(4) * 2.0;
        assert!((closed - 2.0).abs() < 1e-15);
        assert!((ar_forecast4(&s, 2.0) - closed).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn forecast_is_monotone_for_nonnegative_phi(
            phi in 0.0f64..1.5, c in -2.0f64..2.0, a in -5.0f64..5.0, d in 0.0f64..5.0,
        ) {
            let s = ArModelState { phi, intercept: c, window: 12, residual_variance: 0.0 };
            proptest::prop_assert!(ar_forecast4(&s, a) <= ar_forecast4(&s, a + d));
        }

        #[test]
        fn lm_intercept_shifts_with_targets(seed in 0u64..500, shift in -10.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cov = random_cov(&mut rng, 20);
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..3.0)).collect();
            let a = lm_fit(&cov, &series(y.clone()), 20).unwrap();
            let b = lm_fit(&cov, &series(y.iter().map(|v| v + shift).collect()), 20).unwrap();
            proptest::prop_assert!((b.intercept - a.intercept - shift).abs() < 1e-9);
            for d in 0..3 {
                proptest::prop_assert!((b.coefficients[d] - a.coefficients[d]).abs() < 1e-9);
            }
        }
    }
}
