//! Adaptive Dormand–Prince 5(4) integrator with continuous output.

use nalgebra::DVector;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (equal to the last row of `A`, so the last stage is FSAL).
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Fifth minus fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Dense-output weights for the fourth-degree correction term.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rk45Config {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub first_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for Rk45Config {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            first_step: None,
            max_steps: 1_000_000,
        }
    }
}

/// States at the requested report times.
#[derive(Debug, Clone)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

fn err_norm(e: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, cfg: &Rk45Config) -> f64 {
    let n = e.len().max(1) as f64;
    let s: f64 = (0..e.len())
        .map(|i| {
            let sc = cfg.atol + cfg.rtol * y0[i].abs().max(y1[i].abs());
            (e[i] / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &DVector<f64>, f0: &DVector<f64>, dir: f64, cfg: &Rk45Config) -> Result<f64>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let scale = y0.map(|v| cfg.atol + cfg.rtol * v.abs());
    let d0 = y0.component_div(&scale).norm() / (y0.len() as f64).sqrt();
    let d1 = f0.component_div(&scale).norm() / (y0.len() as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = y0 + f0 * (h0 * dir);
    let f1 = f(t0 + h0 * dir, &y1)?;
    let d2 = (f1 - f0).component_div(&scale).norm() / (y0.len() as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1))
}

/// Integrates `y' = f(t, y)` from `t0` and reports the state at each time
/// in `report` (ascending, within `[t0, t_end]`) by dense interpolation.
pub fn integrate<F>(mut f: F, t0: f64, y0: &DVector<f64>, report: &[f64], cfg: &Rk45Config) -> Result<Solution>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    if report.windows(2).any(|w| w[1] < w[0]) || report.first().is_some_and(|&t| t < t0) {
        return Err(Error::Domain("report times must be ascending and not before t0".into()));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    let t_end = report.last().copied().unwrap_or(t0);
    let mut out_t = Vec::with_capacity(report.len());
    let mut out_y = Vec::with_capacity(report.len());
    let mut next = 0;
    while next < report.len() && report[next] <= t0 {
        out_t.push(report[next]);
        out_y.push(y0.clone());
        next += 1;
    }
    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = f(t, &y)?;
    let mut h = match cfg.first_step {
        Some(h) => h,
        None => initial_step(&mut f, t, &y, &k1, 1.0, cfg)?,
    };
    let (mut accepted, mut rejected) = (0, 0);
    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(y.len()); 7];
    while next < report.len() {
        if accepted + rejected >= cfg.max_steps {
            return Err(Error::Integration {
                t,
                state: y.iter().copied().collect(),
                reason: format!("step limit {} reached", cfg.max_steps),
            });
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            return Err(Error::Integration {
                t,
                state: y.iter().copied().collect(),
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        h = h.min(t_end - t);
        k[0] = k1.clone();
        let mut stage_ok = true;
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            match f(t + C[s] * h, &ys) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => k[s] = v,
                _ => {
                    stage_ok = false;
                    break;
                }
            }
        }
        if !stage_ok {
            rejected += 1;
            h *= 0.25;
            continue;
        }
        let mut y_new = y.clone();
        let mut e = DVector::zeros(y.len());
        for s in 0..7 {
            if B[s] != 0.0 {
                y_new.axpy(h * B[s], &k[s], 1.0);
            }
            e.axpy(h * E[s], &k[s], 1.0);
        }
        let err = err_norm(&e, &y, &y_new, cfg);
        if err <= 1.0 {
            let t_new = t + h;
            // Continuous extension on [t, t_new].
            let rc1 = &y;
            let rc2 = &y_new - &y;
            let rc3 = &k[0] * h - &rc2;
            let rc4 = &rc2 - &k[6] * h - &rc3;
            let mut rc5 = DVector::zeros(y.len());
            for s in 0..7 {
                if D[s] != 0.0 {
                    rc5.axpy(h * D[s], &k[s], 1.0);
                }
            }
            while next < report.len() && report[next] <= t_new {
                let th = (report[next] - t) / h;
                let th1 = 1.0 - th;
                let v = rc1 + (&rc2 + (&rc3 + (&rc4 + &rc5 * th1) * th) * th1) * th;
                out_t.push(report[next]);
                out_y.push(if report[next] == t_new { y_new.clone() } else { v });
                next += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k[6].clone();
            accepted += 1;
            let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
            h *= fac;
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok(Solution {
        t: out_t,
        y: out_y,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}
