//! Box-constrained quasi-Newton minimizer.
//!
//! Projected BFGS on the inverse Hessian with a backtracking Armijo line
//! search along the projected path. Accepted objective values never increase.
//! Coordinates pinned at a bound whose gradient points outward are frozen for
//! the step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const MIN_STEP: f64 = 1e-12;
/// Largest move of any coordinate in one iteration.
const MAX_STEP: f64 = 0.5;
const REL_FTOL: f64 = 1e-12;
/// Consecutive negligible-improvement steps before declaring convergence.
const FTOL_PATIENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
    /// The starting point could not be evaluated.
    InitialEvaluationFailed,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective at the start and after every accepted step.
    pub trajectory: Vec<f64>,
}

/// Objective with its gradient; `None` where the point cannot be evaluated.
pub type ValueAndGradient<'a> = dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Sync + 'a;

pub struct Problem<'a> {
    /// Objective only; `None` means the point cannot be evaluated.
    pub value: &'a (dyn Fn(&[f64]) -> Option<f64> + Sync),
    pub value_and_gradient: &'a ValueAndGradient<'a>,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

/// Gradient with components zeroed where a bound blocks descent.
pub fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn minimize(
    problem: &Problem<'_>,
    x0: &[f64],
    max_iterations: usize,
    gradient_tolerance: f64,
) -> MinimizeResult {
    let n = x0.len();
    let (lower, upper) = (problem.lower, problem.upper);
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);

    let Some((mut f, mut g)) = (problem.value_and_gradient)(&x) else {
        return MinimizeResult {
            x,
            value: f64::NAN,
            gradient: vec![f64::NAN; n],
            iterations: 0,
            termination: Termination::InitialEvaluationFailed,
            trajectory: vec![],
        };
    };
    let mut trajectory = vec![f];
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut h_is_identity = true;
    let mut stagnant = 0;
    let mut iterations = 0;

    let termination = loop {
        let pg = projected_gradient(&x, &g, lower, upper);
        if inf_norm(&pg) < gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= max_iterations {
            break Termination::MaxIterations;
        }

        let free: Vec<bool> = pg.iter().map(|v| *v != 0.0).collect();
        let gv = DVector::from_iterator(n, (0..n).map(|i| if free[i] { g[i] } else { 0.0 }));
        let mut d: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        for i in 0..n {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            h.fill_with_identity();
            h_is_identity = true;
            d = pg.iter().map(|v| -v).collect();
        }

        let mut alpha = (MAX_STEP / inf_norm(&d)).min(1.0);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut trial, lower, upper);
            let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if inf_norm(&s) < MIN_STEP {
                break;
            }
            let gs: f64 = g.iter().zip(&s).map(|(a, b)| a * b).sum();
            if let Some(ft) = (problem.value)(&trial) {
                if ft.is_finite() && ft <= f + ARMIJO_C1 * gs.min(0.0) {
                    if let Some((fv, gt)) = (problem.value_and_gradient)(&trial) {
                        accepted = Some((trial, s, fv, gt));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }

        let Some((x_new, s, f_new, g_new)) = accepted else {
            if h_is_identity {
                break Termination::LineSearchFailed;
            }
            h.fill_with_identity();
            h_is_identity = true;
            continue;
        };
        iterations += 1;

        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        if sy > 1e-10 * (ss * yy).sqrt() {
            if h_is_identity {
                h *= sy / yy;
            }
            let rho = 1.0 / sy;
            let sv = DVector::from_vec(s);
            let yv = DVector::from_vec(y);
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h.ger(-rho, &hy, &sv, 1.0);
            h.ger(-rho, &sv, &hy, 1.0);
            h.ger(rho * rho * yhy + rho, &sv, &sv, 1.0);
            h_is_identity = false;
        }

        let improvement = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        trajectory.push(f);

        if improvement <= REL_FTOL * (1.0 + f.abs()) {
            stagnant += 1;
            if stagnant >= FTOL_PATIENCE {
                break Termination::FunctionTolerance;
            }
        } else {
            stagnant = 0;
        }
    };

    MinimizeResult {
        x,
        value: f,
        gradient: g,
        iterations,
        termination,
        trajectory,
    }
}
