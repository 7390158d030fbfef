//! Bound-constrained limited-memory BFGS.
//!
//! Variables at an active bound (gradient pushing outward) are frozen for the
//! iteration; the two-loop recursion runs on the remaining free variables and
//! a backtracking Armijo search follows the projected path
//! `P(x + α d)` onto the box. Accepted steps never increase the objective.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsbConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when one iteration improves the objective by less than this.
    pub ftol: f64,
    /// Stop when the projected gradient's max-norm falls below this.
    pub pgtol: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsbConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 200,
            ftol: 1e-6,
            pgtol: 1e-8,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ProjectedGradient,
    FunctionTolerance,
    LineSearch,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
    pub stop: StopReason,
    /// Objective after each accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).clamp(l, u) - xi).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over the box `[lower, upper]`. `f` returns the value and
/// gradient; evaluation errors or non-finite values during the line search
/// are treated as rejected trial points.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    cfg: &LbfgsbConfig,
) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Shape("bounds do not match the parameter vector".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
        return Err(Error::Domain("bounds must be finite with lower ≤ upper".into()));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    let mut evals = 1;
    if !fx.is_finite() || g.len() != n || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the initial point"));
    }
    let mut history = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut stop = StopReason::MaxIterations;
    let mut iters = 0;

    while iters < cfg.max_iters {
        if projected_gradient_norm(&x, &g, lower, upper) <= cfg.pgtol {
            stop = StopReason::ProjectedGradient;
            break;
        }
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let mut d = two_loop(&g, &free, &pairs);
        let slope = dot(&d, &g);
        if slope >= 0.0 || !slope.is_finite() {
            pairs.clear();
            d = g.iter().zip(&free).map(|(gi, &fr)| if fr { -gi } else { 0.0 }).collect();
        }
        let mut alpha = if pairs.is_empty() {
            let dn = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if dn > 0.0 { (1.0 / dn).min(1.0) } else { 1.0 }
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut xt, lower, upper);
            let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if step.iter().all(|v| *v == 0.0) {
                break;
            }
            evals += 1;
            if let Ok((ft, gt)) = f(&xt) {
                if ft.is_finite()
                    && gt.iter().all(|v| v.is_finite())
                    && ft <= fx + 1e-4 * decrease.min(0.0)
                    && ft <= fx
                {
                    accepted = Some((xt, ft, gt, step));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gn, s)) = accepted else {
            stop = StopReason::LineSearch;
            break;
        };
        iters += 1;
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, yv, 1.0 / sy));
        }
        let improvement = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        if improvement < cfg.ftol {
            stop = StopReason::FunctionTolerance;
            break;
        }
    }
    Ok(OptimResult {
        x,
        f: fx,
        iters,
        evals,
        stop,
        history,
    })
}

/// `−H g` restricted to free coordinates.
fn two_loop(g: &[f64], free: &[bool], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter().zip(free).map(|(x, &fr)| if fr { *x } else { 0.0 }).collect()
    };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let s = mask(s);
        let y = mask(y);
        let a = rho * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(&y) {
            *qi -= a * yi;
        }
        alphas.push((a, s, y));
    }
    if let Some((s, y, _)) = pairs.back() {
        let (s, y) = (mask(s), mask(y));
        let yy = dot(&y, &y);
        let sy = dot(&s, &y);
        if yy > 0.0 && sy > 0.0 {
            let gamma = sy / yy;
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
    }
    for ((a, s, y), (_, _, rho)) in alphas.into_iter().rev().zip(pairs.iter()) {
        let b = rho * dot(&y, &q);
        for (qi, si) in q.iter_mut().zip(&s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().zip(free).map(|(v, &fr)| if fr { -v } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let cfg = LbfgsbConfig {
            ftol: 0.0,
            max_iters: 500,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &cfg).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn active_bound_is_respected() {
        // minimum of the quadratic at (2, −3) lies outside the box
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok(((x[0] - 2.0).powi(2) + (x[1] + 3.0).powi(2), vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 3.0)]))
        };
        let r = minimize(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &LbfgsbConfig::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn history_is_monotone() {
        let cfg = LbfgsbConfig {
            ftol: 0.0,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[-1.5, 2.0], &[-2.0, -1.0], &[2.0, 3.0], &cfg).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.history.len(), r.iters + 1);
    }

    #[test]
    fn failing_trial_points_are_rejected() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 0.5 {
                Err(Error::NonFinite("test"))
            } else {
                Ok(((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)]))
            }
        };
        let r = minimize(f, &[0.0], &[-2.0], &[2.0], &LbfgsbConfig::default()).unwrap();
        assert!(r.x[0] <= 0.5 && r.f <= 1.0);
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(minimize(rosenbrock, &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &LbfgsbConfig::default()).is_err());
    }
}
