//! Model families compared on the benchmarks, and their persisted form.
//!
//! Baselines are fitted on normalized inputs and targets with a zero mean.
//! GP² models are fitted on physical units because `L`, `T` and `b` are
//! physical; predictions of every family are returned in physical units.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fit::{fit, FitResult, RestartTrace, TrainConfig};
use crate::datagen::{Dataset, NormStats};
use crate::error::{Error, Result};
use crate::gp::kernel::Kernel;
use crate::gp::model::{GpModel, PosteriorGp};
use crate::gp2::{Gp2Model, Gp2Posterior, MeanMode};
use crate::systems::{BenchmarkSystem, SystemConfig};

/// Default coregionalization rank.
pub const COREGION_RANK: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelFamily {
    /// Independent SE-ARD GP per output.
    Se,
    Icm,
    Lmc,
    Gp2 { estimate_theta: bool, mean: MeanMode },
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 7] = [
        Self::Se,
        Self::Icm,
        Self::Lmc,
        Self::Gp2 { estimate_theta: true, mean: MeanMode::Zero },
        Self::Gp2 { estimate_theta: true, mean: MeanMode::Parametric },
        Self::Gp2 { estimate_theta: false, mean: MeanMode::Zero },
        Self::Gp2 { estimate_theta: false, mean: MeanMode::Parametric },
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Se => "se",
            Self::Icm => "icm",
            Self::Lmc => "lmc",
            Self::Gp2 { estimate_theta: true, mean: MeanMode::Zero } => "gp2_est_zero",
            Self::Gp2 { estimate_theta: true, mean: MeanMode::Parametric } => "gp2_est_parametric",
            Self::Gp2 { estimate_theta: false, mean: MeanMode::Zero } => "gp2_fixed_zero",
            Self::Gp2 { estimate_theta: false, mean: MeanMode::Parametric } => "gp2_fixed_parametric",
        }
    }

    /// Row label for reports.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Se => "SE",
            Self::Icm => "ICM",
            Self::Lmc => "LMC",
            Self::Gp2 { estimate_theta: true, mean: MeanMode::Zero } => "GP2, est. theta_p, mu_abar=0",
            Self::Gp2 { estimate_theta: true, mean: MeanMode::Parametric } => "GP2, est. theta_p, mu_abar!=0",
            Self::Gp2 { estimate_theta: false, mean: MeanMode::Zero } => "GP2, theta_p=theta_p*, mu_abar=0",
            Self::Gp2 { estimate_theta: false, mean: MeanMode::Parametric } => "GP2, theta_p=theta_p*, mu_abar!=0",
        }
    }

    pub fn is_gp2(&self) -> bool {
        matches!(self, Self::Gp2 { .. })
    }

    pub fn default_train_config(&self, seed: u64) -> TrainConfig {
        if self.is_gp2() {
            TrainConfig::gp2(seed)
        } else {
            TrainConfig::baseline(seed)
        }
    }

    /// Untrained baseline model over normalized data.
    pub fn baseline_template(&self, outputs: usize, input_dim: usize) -> Result<GpModel> {
        let kernel = match self {
            Self::Se => Kernel::independent_se(outputs, input_dim),
            Self::Icm => Kernel::icm(outputs, input_dim, COREGION_RANK),
            Self::Lmc => Kernel::lmc(outputs, input_dim, COREGION_RANK),
            Self::Gp2 { .. } => return Err(Error::Domain(format!("{self} is not a baseline"))),
        };
        Ok(GpModel::new(kernel, 1e-2))
    }

    pub fn gp2_template(&self, sys: &BenchmarkSystem) -> Result<Gp2Model> {
        match *self {
            Self::Gp2 { estimate_theta, mean } => Ok(Gp2Model::new(sys.clone(), mean, estimate_theta)),
            _ => Err(Error::Domain(format!("{self} is not a GP² family"))),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|f| f.as_str()).collect();
                Error::Domain(format!("unknown model family '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

impl TryFrom<String> for ModelFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelFamily> for String {
    fn from(f: ModelFamily) -> String {
        f.as_str().to_string()
    }
}

/// A conditioned model ready for prediction in physical units.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Baseline {
        family: ModelFamily,
        norm: NormStats,
        posterior: PosteriorGp,
    },
    Gp2 {
        family: ModelFamily,
        posterior: Gp2Posterior,
    },
}

impl FittedModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            Self::Baseline { family, .. } | Self::Gp2 { family, .. } => *family,
        }
    }

    /// Hyperparameter vector in the family's own parameterization.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Self::Baseline { posterior, .. } => posterior.prior.params(),
            Self::Gp2 { posterior, .. } => posterior.model.params(),
        }
    }

    /// θ_p in use (empty for baselines).
    pub fn theta(&self) -> Vec<f64> {
        match self {
            Self::Baseline { .. } => vec![],
            Self::Gp2 { posterior, .. } => posterior.model.theta.clone(),
        }
    }

    /// Conditions a family with given hyperparameters on a dataset.
    pub fn build(family: ModelFamily, sys: &BenchmarkSystem, ds: &Dataset, params: &[f64]) -> Result<Self> {
        if family.is_gp2() {
            let mut m = family.gp2_template(sys)?;
            check_len(params, m.num_params())?;
            m.set_params(params);
            Ok(Self::Gp2 {
                family,
                posterior: m.condition(&ds.x, &ds.y)?,
            })
        } else {
            let mut m = family.baseline_template(sys.dof(), sys.input_dim())?;
            check_len(params, m.num_params())?;
            m.set_params(params);
            let (xn, yn) = (ds.norm.normalize_x(&ds.x), ds.norm.normalize_y(&ds.y));
            Ok(Self::Baseline {
                family,
                norm: ds.norm.clone(),
                posterior: m.condition(&xn, &yn)?,
            })
        }
    }

    /// Posterior mean of `q̈` at raw inputs, in physical units.
    pub fn predict_mean(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Self::Baseline { norm, posterior, .. } => {
                Ok(norm.denormalize_y(&posterior.predict_mean(&norm.normalize_x(x))?))
            }
            Self::Gp2 { posterior, .. } => posterior.predict_mean(x),
        }
    }

    /// Posterior mean and marginal variance, both in physical units.
    pub fn predict_marginal(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            Self::Baseline { norm, posterior, .. } => {
                let (m, v) = posterior.predict_marginal(&norm.normalize_x(x))?;
                Ok((norm.denormalize_y(&m), norm.denormalize_y_var(&v)))
            }
            Self::Gp2 { posterior, .. } => {
                let p = posterior.predict_marginal(x)?;
                Ok((p.mean, p.var))
            }
        }
    }
}

fn check_len(p: &[f64], expected: usize) -> Result<()> {
    if p.len() == expected {
        Ok(())
    } else {
        Err(Error::Shape(format!("expected {expected} hyperparameters, got {}", p.len())))
    }
}

/// Fits one family on a dataset.
pub fn fit_family(
    family: ModelFamily,
    sys: &BenchmarkSystem,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(FittedModel, FitResult<Vec<f64>>)> {
    let summarize = |lml: f64, best: usize, traces: Vec<RestartTrace>, params: Vec<f64>| FitResult {
        model: params,
        lml,
        best_restart: best,
        traces,
    };
    if family.is_gp2() {
        let template = family.gp2_template(sys)?;
        let r = fit(&template, &ds.x, &ds.y, cfg)?;
        let params = r.model.params();
        let fitted = FittedModel::Gp2 {
            family,
            posterior: r.model.condition(&ds.x, &ds.y)?,
        };
        Ok((fitted, summarize(r.lml, r.best_restart, r.traces, params)))
    } else {
        let template = family.baseline_template(sys.dof(), sys.input_dim())?;
        let (xn, yn) = (ds.norm.normalize_x(&ds.x), ds.norm.normalize_y(&ds.y));
        let r = fit(&template, &xn, &yn, cfg)?;
        let params = r.model.params();
        let fitted = FittedModel::Baseline {
            family,
            norm: ds.norm.clone(),
            posterior: r.model.condition(&xn, &yn)?,
        };
        Ok((fitted, summarize(r.lml, r.best_restart, r.traces, params)))
    }
}

/// Version tag of the model file layout.
pub const MODEL_FILE_VERSION: u32 = 1;

/// Persisted model: hyperparameters plus everything needed to rebuild the
/// posterior from the referenced dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub family: ModelFamily,
    pub system: SystemConfig,
    pub params: Vec<f64>,
    pub theta: Vec<f64>,
    pub lml: f64,
    pub best_restart: usize,
    pub restarts: usize,
    pub train_seed: u64,
    pub norm: NormStats,
    /// Path of the training dataset, relative to the model file's directory.
    pub dataset: String,
    pub data_seed: u64,
}

impl ModelFile {
    pub fn restore(&self, sys: &BenchmarkSystem, ds: &Dataset) -> Result<FittedModel> {
        if self.version != MODEL_FILE_VERSION {
            return Err(Error::Domain(format!("unsupported model file version {}", self.version)));
        }
        FittedModel::build(self.family, sys, ds, &self.params)
    }
}
