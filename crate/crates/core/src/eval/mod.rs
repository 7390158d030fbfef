//! Metrics, rollouts and report aggregation for the benchmark experiments.

pub mod metrics;
pub mod report;
pub mod rk45;
pub mod rollout;

pub use metrics::{max_constraint_error, rmse_normalized};
pub use report::{records_from_csv, records_to_csv, EvalReport, ReportCell, RunRecord, Summary};
pub use rk45::{integrate, Rk45Config, Solution};
pub use rollout::{constraint_drift, rollout, surface_distance, surface_distance_series, DerivSource, Trajectory};
