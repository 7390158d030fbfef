//! Multi-restart maximum-likelihood fitting.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgsb::{minimize, LbfgsbConfig, StopReason};
use crate::error::{Error, Result};
use crate::gp::kernel::ParamKind;
use crate::gp::model::GpModel;
use crate::gp2::Gp2Model;

/// A model whose hyperparameters can be fitted by maximizing the LML.
pub trait Trainable: Clone + Send + Sync {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]);
    fn param_kinds(&self) -> Vec<ParamKind>;
    fn lml(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64>;
    fn lml_with_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)>;
    /// `y` minus the prior mean under the current parameters.
    fn prior_residual(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>>;
    /// Bounds for entries of θ_p (only consulted for `ParamKind::Theta`).
    fn theta_bounds(&self) -> Vec<(f64, f64)> {
        Vec::new()
    }
}

impl Trainable for GpModel {
    fn params(&self) -> Vec<f64> {
        GpModel::params(self)
    }
    fn set_params(&mut self, p: &[f64]) {
        GpModel::set_params(self, p)
    }
    fn param_kinds(&self) -> Vec<ParamKind> {
        GpModel::param_kinds(self)
    }
    fn lml(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        self.log_marginal_likelihood(x, y)
    }
    fn lml_with_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
        GpModel::lml_with_grad(self, x, y)
    }
    fn prior_residual(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(y - self.prior_mean(x)?)
    }
}

impl Trainable for Gp2Model {
    fn params(&self) -> Vec<f64> {
        Gp2Model::params(self)
    }
    fn set_params(&mut self, p: &[f64]) {
        Gp2Model::set_params(self, p)
    }
    fn param_kinds(&self) -> Vec<ParamKind> {
        Gp2Model::param_kinds(self)
    }
    fn lml(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        self.log_marginal_likelihood(x, y)
    }
    fn lml_with_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
        Gp2Model::lml_with_grad(self, x, y)
    }
    fn prior_residual(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(y - self.prior()?.prior_mean(x)?)
    }
    fn theta_bounds(&self) -> Vec<(f64, f64)> {
        self.system.theta_bounds.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Absolute LML improvement below which a restart stops.
    pub ftol: f64,
    pub seed: u64,
    /// Run restarts on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            restarts: 30,
            max_iters: 200,
            ftol: 1e-6,
            seed: 0,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub const BASELINE_RESTARTS: usize = 30;
    pub const GP2_RESTARTS: usize = 5;

    pub fn baseline(seed: u64) -> Self {
        Self {
            restarts: Self::BASELINE_RESTARTS,
            seed,
            ..Self::default()
        }
    }

    pub fn gp2(seed: u64) -> Self {
        Self {
            restarts: Self::GP2_RESTARTS,
            seed,
            ..Self::default()
        }
    }
}

/// Per-dimension input spread and per-output target variance used to
/// scale hyperparameter bounds and initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct DataScale {
    pub x_std: Vec<f64>,
    pub y_var: Vec<f64>,
}

impl DataScale {
    pub fn from_data(x: &DMatrix<f64>, resid: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let x_std = x
            .column_iter()
            .map(|c| {
                let m = c.sum() / n;
                let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        let y_var = resid
            .column_iter()
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / n).max(1e-12))
            .collect();
        Self { x_std, y_var }
    }

    fn var(&self, output: Option<usize>) -> f64 {
        match output {
            Some(i) => self.y_var[i],
            None => self.y_var.iter().sum::<f64>() / self.y_var.len() as f64,
        }
    }
}

/// Box bounds (in the parameters' own coordinates, log for positive ones).
pub fn param_bounds(kinds: &[ParamKind], scale: &DataScale, theta: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let d = scale.x_std.len() as f64;
    kinds
        .iter()
        .map(|k| match *k {
            ParamKind::LogVariance { output } => {
                let v = scale.var(output).ln();
                (v + (1e-6f64).ln(), v + (1e4f64).ln())
            }
            ParamKind::LogLengthscale { dim } => {
                let s = scale.x_std[dim].ln();
                (s + (1e-3f64).ln(), s + (1e3f64).ln())
            }
            ParamKind::LogLinearVariance { dim } => {
                let v = (scale.var(None) / (d * scale.x_std[dim].powi(2))).ln();
                (v + (1e-8f64).ln(), v + (1e4f64).ln())
            }
            ParamKind::CoregionWeight => {
                let w = 10.0 * scale.var(None).sqrt();
                (-w, w)
            }
            ParamKind::LogKappa => {
                let v = scale.var(None).ln();
                (v + (1e-8f64).ln(), v + (1e4f64).ln())
            }
            ParamKind::LogNoise { output } => {
                let v = scale.var(Some(output)).ln();
                (v + (1e-10f64).ln(), v + (10.0f64).ln())
            }
            ParamKind::Theta { index } => theta[index],
        })
        .unzip()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln())
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64 + 1);
    rng
}

/// Random starting point for one restart. θ_p entries are drawn first
/// (uniform over their bounds) so the target-variance scale reflects the
/// prior mean at the drawn θ_p.
pub fn init_hyperparameters<M: Trainable>(
    model: &M,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    seed: u64,
    restart: usize,
) -> Result<Vec<f64>> {
    let mut rng = restart_rng(seed, restart);
    let kinds = model.param_kinds();
    let tb = model.theta_bounds();
    let mut p = model.params();
    for (j, k) in kinds.iter().enumerate() {
        if let ParamKind::Theta { index } = *k {
            let (lo, hi) = tb[index];
            p[j] = rng.random_range(lo..=hi);
        }
    }
    let mut m = model.clone();
    m.set_params(&p);
    let scale = DataScale::from_data(x, &m.prior_residual(x, y)?);
    let d = scale.x_std.len() as f64;
    for (j, k) in kinds.iter().enumerate() {
        p[j] = match *k {
            ParamKind::LogVariance { output } => scale.var(output).ln() + log_uniform(&mut rng, 0.1, 10.0),
            ParamKind::LogLengthscale { dim } => scale.x_std[dim].ln() + log_uniform(&mut rng, 0.1, 10.0),
            ParamKind::LogLinearVariance { dim } => {
                (scale.var(None) / (d * scale.x_std[dim].powi(2))).ln() + log_uniform(&mut rng, 0.01, 1.0)
            }
            ParamKind::CoregionWeight => scale.var(None).sqrt() * rng.random_range(-1.0..1.0),
            ParamKind::LogKappa => scale.var(None).ln() + log_uniform(&mut rng, 0.1, 1.0),
            ParamKind::LogNoise { output } => (1e-2 * scale.var(Some(output))).ln(),
            ParamKind::Theta { .. } => p[j],
        };
    }
    let (lo, hi) = param_bounds(&kinds, &scale, &tb);
    for ((v, l), h) in p.iter_mut().zip(&lo).zip(&hi) {
        *v = v.clamp(*l, *h);
    }
    Ok(p)
}

/// Outcome of one optimization restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub initial_lml: Option<f64>,
    pub final_lml: Option<f64>,
    pub iters: usize,
    /// LML after each accepted iterate.
    pub lml_history: Vec<f64>,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitResult<M> {
    pub model: M,
    pub lml: f64,
    pub best_restart: usize,
    pub traces: Vec<RestartTrace>,
}

fn run_restart<M: Trainable>(
    template: &M,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainConfig,
    restart: usize,
) -> (RestartTrace, Option<(Vec<f64>, f64)>) {
    let fail = |e: Error| {
        (
            RestartTrace {
                restart,
                initial_lml: None,
                final_lml: None,
                iters: 0,
                lml_history: vec![],
                stop: None,
                error: Some(e.to_string()),
            },
            None,
        )
    };
    let p0 = match init_hyperparameters(template, x, y, cfg.seed, restart) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let kinds = template.param_kinds();
    let mut m0 = template.clone();
    m0.set_params(&p0);
    let scale = match m0.prior_residual(x, y) {
        Ok(r) => DataScale::from_data(x, &r),
        Err(e) => return fail(e),
    };
    let (lo, hi) = param_bounds(&kinds, &scale, &template.theta_bounds());
    let opt_cfg = LbfgsbConfig {
        max_iters: cfg.max_iters,
        ftol: cfg.ftol,
        ..LbfgsbConfig::default()
    };
    let objective = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut m = template.clone();
        m.set_params(p);
        let (v, g) = m.lml_with_grad(x, y)?;
        Ok((-v, g.into_iter().map(|gi| -gi).collect()))
    };
    match minimize(objective, &p0, &lo, &hi, &opt_cfg) {
        Ok(r) => {
            let hist: Vec<f64> = r.history.iter().map(|v| -v).collect();
            let trace = RestartTrace {
                restart,
                initial_lml: hist.first().copied(),
                final_lml: Some(-r.f),
                iters: r.iters,
                lml_history: hist,
                stop: Some(r.stop),
                error: None,
            };
            (trace, Some((r.x, -r.f)))
        }
        Err(e) => fail(e),
    }
}

/// Fits `template` by maximizing the LML from `cfg.restarts` random starts
/// and keeps the best (ties go to the lowest restart index).
pub fn fit<M: Trainable>(template: &M, x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &TrainConfig) -> Result<FitResult<M>> {
    if x.nrows() == 0 {
        return Err(Error::Training("dataset is empty".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::Training("at least one restart is required".into()));
    }
    let results: Vec<_> = if cfg.parallel {
        (0..cfg.restarts)
            .into_par_iter()
            .map(|r| run_restart(template, x, y, cfg, r))
            .collect()
    } else {
        (0..cfg.restarts).map(|r| run_restart(template, x, y, cfg, r)).collect()
    };
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let mut traces = Vec::with_capacity(results.len());
    for (trace, res) in results {
        if let Some((p, v)) = res {
            if best.as_ref().is_none_or(|(_, _, b)| v > *b) {
                best = Some((trace.restart, p, v));
            }
        }
        traces.push(trace);
    }
    let Some((best_restart, p, lml)) = best else {
        let msgs: Vec<String> = traces.iter().filter_map(|t| t.error.clone()).collect();
        return Err(Error::Training(format!("all restarts failed: {}", msgs.join("; "))));
    };
    let mut model = template.clone();
    model.set_params(&p);
    Ok(FitResult {
        model,
        lml,
        best_restart,
        traces,
    })
}

/// Training trace as CSV with columns `restart,iter,lml`.
pub fn trace_csv(traces: &[RestartTrace]) -> String {
    let mut s = String::from("restart,iter,lml\n");
    for t in traces {
        for (i, v) in t.lml_history.iter().enumerate() {
            s.push_str(&format!("{},{},{:.12e}\n", t.restart, i, v));
        }
    }
    s
}
