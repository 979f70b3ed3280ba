//! Deterministic first-order minimization with Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs};

pub(crate) fn euclidean(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Steepest descent.
    GradientDescent,
    /// Limited-memory BFGS search directions.
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub method: Method,
    /// Stop when the gradient max-norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Correction pairs kept by L-BFGS.
    pub memory: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            method: Method::Lbfgs,
            tolerance: 1e-6,
            max_iterations: 5000,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const WOLFE_SIGMA: f64 = 0.9;
const WOLFE_DELTA: f64 = 0.1;
/// Relative size of objective changes treated as rounding noise.
pub const ROUNDING_SLACK: f64 = 1e-14;

/// Minimizes `f`, which returns the objective and writes the gradient into its
/// second argument.
///
/// Trial steps are halved until the Armijo condition holds. Close to the
/// optimum the decrease Armijo asks for drops below the rounding error of the
/// objective itself; there a step is also accepted when the objective is
/// unchanged to within a few ulps and the directional derivative satisfies
/// the approximate Wolfe bounds. The recorded objective sequence is therefore
/// nonincreasing up to that rounding slack.
pub fn minimize<F>(f: F, x0: Vec<f64>, settings: &OptimizerSettings) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    minimize_preconditioned(f, x0, None, settings)
}

/// As [`minimize`], with search directions scaled by a positive diagonal
/// `precond` (an approximate inverse Hessian diagonal). The scaling changes
/// the path only; convergence is still judged on the unscaled gradient.
pub fn minimize_preconditioned<F>(
    f: F,
    x0: Vec<f64>,
    precond: Option<&[f64]>,
    settings: &OptimizerSettings,
) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    minimize_with(f, x0, precond, max_abs, settings)
}

/// Core loop; `stop_norm` measures the gradient for the convergence test and
/// for `Minimum::gradient_norm`.
pub(crate) fn minimize_with<F>(
    mut f: F,
    x0: Vec<f64>,
    precond: Option<&[f64]>,
    stop_norm: fn(&[f64]) -> f64,
    settings: &OptimizerSettings,
) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    if let Some(d) = precond {
        if d.len() != n || !d.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::Input(
                "preconditioner must be positive and match the parameter count".into(),
            ));
        }
    }
    let scale = |v: &[f64], out: &mut [f64]| match precond {
        Some(d) => out.iter_mut().zip(v).zip(d).for_each(|((o, vi), di)| *o = -vi * di),
        None => out.iter_mut().zip(v).for_each(|(o, vi)| *o = -vi),
    };
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    let mut gnorm = stop_norm(&g);
    let mut history = vec![value];

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut gd_step = if precond.is_some() { 1.0 } else { 1.0 / gnorm.max(1.0) };

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    for iter in 0..settings.max_iterations {
        if gnorm < settings.tolerance {
            return Ok(Minimum {
                x,
                value,
                gradient_norm: gnorm,
                iterations: iter,
                history,
            });
        }
        let use_lbfgs = settings.method == Method::Lbfgs && !s_hist.is_empty();
        if use_lbfgs {
            two_loop(&g, &s_hist, &y_hist, precond, &mut dir);
        } else {
            scale(&g, &mut dir);
        }
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // lost descent; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            scale(&g, &mut dir);
            slope = dot(&g, &dir);
        }

        let mut step = match settings.method {
            Method::Lbfgs if use_lbfgs || precond.is_some() => 1.0,
            Method::Lbfgs => 1.0 / gnorm.max(1.0),
            Method::GradientDescent => gd_step,
        };
        let mut accepted = false;
        let mut new_value = value;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            new_value = f(&x_new, &mut g_new);
            if new_value.is_finite() {
                if new_value <= value + ARMIJO_C1 * step * slope {
                    accepted = true;
                    break;
                }
                let slack = ROUNDING_SLACK * value.abs().max(1.0);
                if (new_value - value).abs() <= slack {
                    let d_new = dot(&g_new, &dir);
                    if d_new >= WOLFE_SIGMA * slope && d_new <= (2.0 * WOLFE_DELTA - 1.0) * slope {
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations: iter,
                gradient_norm: gnorm,
            });
        }

        if settings.method == Method::GradientDescent {
            gd_step = step * 2.0;
        }
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let yv: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        if settings.method == Method::Lbfgs {
            let sy = dot(&s, &yv);
            if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&s, &s).sqrt() {
                if s_hist.len() == settings.memory.max(1) {
                    s_hist.remove(0);
                    y_hist.remove(0);
                }
                s_hist.push(s);
                y_hist.push(yv);
            }
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        value = new_value;
        gnorm = stop_norm(&g);
        history.push(value);
    }

    if gnorm < settings.tolerance {
        return Ok(Minimum {
            x,
            value,
            gradient_norm: gnorm,
            iterations: settings.max_iterations,
            history,
        });
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iterations,
        gradient_norm: gnorm,
    })
}

/// L-BFGS two-loop recursion: `dir = -H g`, with H₀ = γ·diag(precond).
fn two_loop(
    g: &[f64],
    s_hist: &[Vec<f64>],
    y_hist: &[Vec<f64>],
    precond: Option<&[f64]>,
    dir: &mut [f64],
) {
    let m = s_hist.len();
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; m];
    let rho: Vec<f64> = (0..m).map(|i| 1.0 / dot(&y_hist[i], &s_hist[i])).collect();
    for i in (0..m).rev() {
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    let last = m - 1;
    let (sl, yl) = (&s_hist[last], &y_hist[last]);
    match precond {
        Some(d) => {
            let ydy: f64 = yl.iter().zip(d).map(|(y, di)| y * y * di).sum();
            let gamma = dot(sl, yl) / ydy;
            q.iter_mut().zip(d).for_each(|(v, di)| *v *= gamma * di);
        }
        None => {
            let gamma = dot(sl, yl) / dot(yl, yl);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for i in 0..m {
        let beta = rho[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    for (d, qv) in dir.iter_mut().zip(&q) {
        *d = -qv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64], g: &mut [f64]) -> f64 {
        // ill-conditioned diagonal quadratic centred at (1, -2, 3)
        let c = [1.0, -2.0, 3.0];
        let w = [1.0, 10.0, 100.0];
        let mut v = 0.0;
        for i in 0..3 {
            g[i] = w[i] * (x[i] - c[i]);
            v += 0.5 * w[i] * (x[i] - c[i]).powi(2);
        }
        v
    }

    #[test]
    fn both_methods_reach_quadratic_minimum() {
        for method in [Method::GradientDescent, Method::Lbfgs] {
            let s = OptimizerSettings {
                method,
                tolerance: 1e-10,
                ..Default::default()
            };
            let m = minimize(quadratic, vec![0.0; 3], &s).unwrap();
            assert!((m.x[0] - 1.0).abs() < 1e-9 && (m.x[2] - 3.0).abs() < 1e-9, "{method:?}");
            assert!(m.history.windows(2).all(|w| w[1] <= w[0] + ROUNDING_SLACK * w[0].abs().max(1.0)));
        }
    }

    #[test]
    fn iteration_cap_reports_gradient_norm() {
        let s = OptimizerSettings {
            method: Method::GradientDescent,
            tolerance: 1e-14,
            max_iterations: 3,
            ..Default::default()
        };
        match minimize(quadratic, vec![0.0; 3], &s).unwrap_err() {
            Error::NonConvergence { iterations, gradient_norm } => {
                assert_eq!(iterations, 3);
                assert!(gradient_norm > 0.0);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn exact_preconditioner_solves_in_one_step() {
        let d = [1.0, 0.1, 0.01];
        for method in [Method::GradientDescent, Method::Lbfgs] {
            let s = OptimizerSettings {
                method,
                tolerance: 1e-10,
                ..Default::default()
            };
            let m = minimize_preconditioned(quadratic, vec![0.0; 3], Some(&d), &s).unwrap();
            assert_eq!(m.iterations, 1, "{method:?}");
        }
    }

    #[test]
    fn rejects_nonpositive_preconditioner() {
        let s = OptimizerSettings::default();
        assert!(minimize_preconditioned(quadratic, vec![0.0; 3], Some(&[1.0, 0.0, 1.0]), &s).is_err());
        assert!(minimize_preconditioned(quadratic, vec![0.0; 3], Some(&[1.0]), &s).is_err());
    }

    #[test]
    fn rosenbrock_with_lbfgs() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = minimize(f, vec![-1.2, 1.0], &OptimizerSettings::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }
}
