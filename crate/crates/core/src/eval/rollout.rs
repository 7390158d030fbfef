//! Trajectory rollouts and constraint drift along them.

use nalgebra::{DMatrix, DVector};

use super::rk45::{integrate, Rk45Config};
use crate::error::{Error, Result};
use crate::systems::BenchmarkSystem;
use crate::train::FittedModel;

/// Where `q̈` comes from during a rollout.
#[derive(Debug, Clone, Copy)]
pub enum DerivSource<'a> {
    Analytic,
    Model(&'a FittedModel),
}

/// States at report times, one input row (`q, q̇, t, u`) per time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub rows: DMatrix<f64>,
}

/// Evenly spaced report times on `[0, horizon]`.
pub fn report_times(horizon: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![horizon],
        _ => (0..points).map(|i| horizon * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Builds the model input row for state `(q, q̇)` at time `t`. Autonomous
/// systems (time fixed in the data domain) keep their constant time column;
/// controls follow the system's control law or stay at their initial value.
fn input_row(sys: &BenchmarkSystem, x0: &[f64], t: f64, y: &DVector<f64>) -> Vec<f64> {
    let lay = sys.layout;
    let mut row = x0.to_vec();
    for i in 0..lay.n {
        row[lay.q(i)] = y[i];
        row[lay.qdot(i)] = y[lay.n + i];
    }
    let tcol = lay.t();
    if sys.state_domain[tcol].width() > 0.0 {
        row[tcol] = t;
    }
    if sys.control_law.is_some() {
        let u = sys.control_at(t);
        for i in 0..lay.n_u {
            row[lay.u(i)] = u[i];
        }
    }
    row
}

/// Integrates `(q, q̇)` from the input row `x0` over `[t0, t0 + horizon]`,
/// with `t0` taken from `x0`.
pub fn rollout(
    sys: &BenchmarkSystem,
    source: DerivSource<'_>,
    x0: &[f64],
    horizon: f64,
    points: usize,
    cfg: &Rk45Config,
) -> Result<Trajectory> {
    let lay = sys.layout;
    if x0.len() != lay.dim() {
        return Err(Error::Shape(format!("initial row has {} entries, expected {}", x0.len(), lay.dim())));
    }
    let n = lay.n;
    let t0 = x0[lay.t()];
    let mut y0 = DVector::zeros(2 * n);
    for i in 0..n {
        y0[i] = x0[lay.q(i)];
        y0[n + i] = x0[lay.qdot(i)];
    }
    let deriv = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let row = input_row(sys, x0, t, y);
        let qdd = match source {
            DerivSource::Analytic => sys.acceleration(&row)?,
            DerivSource::Model(m) => {
                let x = DMatrix::from_row_slice(1, row.len(), &row);
                m.predict_mean(&x)?.row(0).transpose()
            }
        };
        let mut d = DVector::zeros(2 * n);
        for i in 0..n {
            d[i] = y[n + i];
            d[n + i] = qdd[i];
        }
        Ok(d)
    };
    let times: Vec<f64> = report_times(horizon, points).into_iter().map(|s| t0 + s).collect();
    let sol = integrate(deriv, t0, &y0, &times, cfg)?;
    let mut rows = DMatrix::zeros(sol.t.len(), lay.dim());
    for (k, (t, y)) in sol.t.iter().zip(&sol.y).enumerate() {
        let row = input_row(sys, x0, *t, y);
        rows.row_mut(k).copy_from_slice(&row);
    }
    Ok(Trajectory { t: sol.t, rows })
}

/// `|c(q, q̇, t)|` with the true parameters at each report time.
pub fn constraint_drift(traj: &Trajectory, sys: &BenchmarkSystem) -> Vec<f64> {
    (0..traj.rows.nrows())
        .map(|k| {
            let row: Vec<f64> = traj.rows.row(k).iter().copied().collect();
            sys.constraint.residual(&row, sys.layout, &sys.theta_star).abs()
        })
        .collect()
}

/// Euclidean distance from `(q1, q2, q3)` to the surface of a surface system,
/// found by Gauss-Newton on the foot point. `None` for other systems.
pub fn surface_distance(sys: &BenchmarkSystem, q: [f64; 3], theta: &[f64]) -> Option<f64> {
    sys.surface_height(0.0, 0.0, theta)?;
    let (mut a, mut b) = (q[0], q[1]);
    for _ in 0..100 {
        let h = sys.surface_height(a, b, theta)?;
        let (ha, hb) = sys.surface_gradient(a, b, theta)?;
        let r = [a - q[0], b - q[1], h - q[2]];
        // J = [[1, 0], [0, 1], [ha, hb]]
        let g = [r[0] + ha * r[2], r[1] + hb * r[2]];
        let (m11, m12, m22) = (1.0 + ha * ha, ha * hb, 1.0 + hb * hb);
        let det = m11 * m22 - m12 * m12;
        let da = -(m22 * g[0] - m12 * g[1]) / det;
        let db = -(m11 * g[1] - m12 * g[0]) / det;
        a += da;
        b += db;
        if da.abs().max(db.abs()) <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    let h = sys.surface_height(a, b, theta)?;
    Some(((a - q[0]).powi(2) + (b - q[1]).powi(2) + (h - q[2]).powi(2)).sqrt())
}

/// Euclidean surface distance at each report time (true parameters).
pub fn surface_distance_series(traj: &Trajectory, sys: &BenchmarkSystem) -> Option<Vec<f64>> {
    let lay = sys.layout;
    (0..traj.rows.nrows())
        .map(|k| {
            let r = traj.rows.row(k);
            surface_distance(sys, [r[lay.q(0)], r[lay.q(1)], r[lay.q(2)]], &sys.theta_star)
        })
        .collect()
}
