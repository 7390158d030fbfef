//! Prediction-quality metrics.

use nalgebra::DMatrix;

use crate::datagen::NormStats;
use crate::error::{Error, Result};
use crate::systems::BenchmarkSystem;

/// RMSE of `(pred − truth) / y_std`, pooled over all points and outputs.
pub fn rmse_normalized(pred: &DMatrix<f64>, truth: &DMatrix<f64>, norm: &NormStats) -> Result<f64> {
    if pred.shape() != truth.shape() || pred.ncols() != norm.y_std.len() {
        return Err(Error::Shape(format!(
            "prediction {:?}, truth {:?}, {} output scales",
            pred.shape(),
            truth.shape(),
            norm.y_std.len()
        )));
    }
    let count = pred.len();
    if count == 0 {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for j in 0..pred.ncols() {
        for k in 0..pred.nrows() {
            s += ((pred[(k, j)] - truth[(k, j)]) / norm.y_std[j]).powi(2);
        }
    }
    Ok((s / count as f64).sqrt())
}

/// Largest `‖A(x, θ*) q̈(x) − b(x, θ*)‖_∞` over the grid, using the true
/// parameters of the system.
pub fn max_constraint_error(pred: &DMatrix<f64>, grid: &DMatrix<f64>, sys: &BenchmarkSystem) -> Result<f64> {
    if pred.nrows() != grid.nrows() || pred.ncols() != sys.dof() || grid.ncols() != sys.input_dim() {
        return Err(Error::Shape("prediction and grid do not match the system".into()));
    }
    let config = sys.configuration();
    let mut worst = 0.0_f64;
    for k in 0..grid.nrows() {
        let row: Vec<f64> = grid.row(k).iter().copied().collect();
        let r = config.constraint_residual(&row, &pred.row(k).transpose());
        if !r.is_finite() {
            return Err(Error::NonFinite("constraint residual"));
        }
        worst = worst.max(r);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{analytic_targets, prediction_grid};
    use crate::systems::SystemName;

    fn stats(n: usize, std: f64) -> NormStats {
        NormStats {
            x_mean: vec![],
            x_std: vec![],
            y_mean: vec![0.0; n],
            y_std: vec![std; n],
        }
    }

    #[test]
    fn rmse_zero_for_exact_prediction() {
        let t = DMatrix::from_fn(5, 3, |i, j| (i * j) as f64);
        assert_eq!(rmse_normalized(&t, &t, &stats(3, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn rmse_of_unit_offset_on_one_output() {
        let n = 4;
        let truth = DMatrix::from_fn(10, n, |i, j| (i + j) as f64);
        let mut pred = truth.clone();
        pred.column_mut(2).add_scalar_mut(2.5);
        let r = rmse_normalized(&pred, &truth, &stats(n, 2.5)).unwrap();
        assert!((r - (1.0 / n as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn analytic_predictions_satisfy_constraints() {
        for name in SystemName::ALL {
            let sys = BenchmarkSystem::by_name(name);
            let grid = prediction_grid(&sys, 3).unwrap();
            let truth = analytic_targets(&sys, &grid).unwrap();
            assert!(max_constraint_error(&truth, &grid, &sys).unwrap() <= 1e-10);
        }
    }
}
