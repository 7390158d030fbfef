//! Experiment configuration: one JSON document, overridable from flags.

use std::fs;
use std::path::{Path, PathBuf};

use gauss_gp::systems::{SystemConfig, SystemName};
use gauss_gp::train::ModelFamily;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "GAUSSGP_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub system: SystemConfig,
    pub families: Vec<ModelFamily>,
    pub n_train: usize,
    pub sigma_y: f64,
    pub runs: usize,
    /// Run `r` uses data seed `seed + r` and training seed `seed + 1000 + r`.
    pub seed: u64,
    /// Restart overrides; `None` keeps 30 for baselines and 5 for GP².
    pub baseline_restarts: Option<usize>,
    pub gp2_restarts: Option<usize>,
    pub max_iters: usize,
    /// Minimum number of prediction-grid points.
    pub grid_points: usize,
    pub trajectory: TrajectorySettings,
    pub transfer: TransferSettings,
    pub infer_abar: InferAbarSettings,
    /// Output directory; `None` falls back to `$GAUSSGP_OUT`, then `./results`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySettings {
    pub initial_states: usize,
    pub horizon: f64,
    pub points: usize,
    /// Fitted run whose models are rolled out.
    pub run: usize,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self {
            initial_states: 5,
            horizon: 10.0,
            points: 100,
            run: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSettings {
    pub n_source: usize,
    pub grid_points: usize,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            n_source: 200,
            grid_points: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferAbarSettings {
    pub n_train: usize,
    pub points_per_dim: usize,
}

impl Default for InferAbarSettings {
    fn default() -> Self {
        Self {
            n_train: 100,
            points_per_dim: 15,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            system: SystemConfig::default_for(SystemName::SurfaceParticle),
            families: ModelFamily::ALL.to_vec(),
            n_train: 100,
            sigma_y: gauss_gp::datagen::DEFAULT_SIGMA_Y,
            runs: 10,
            seed: 0,
            baseline_restarts: None,
            gp2_restarts: None,
            max_iters: 200,
            grid_points: 1000,
            trajectory: TrajectorySettings::default(),
            transfer: TransferSettings::default(),
            infer_abar: InferAbarSettings::default(),
            out: None,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub system: Option<SystemName>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub families: Option<Vec<ModelFamily>>,
    pub n_train: Option<usize>,
    pub restarts: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        if let Some(name) = ov.system {
            if cfg.system.name() != name {
                cfg.system = SystemConfig::default_for(name);
            }
        }
        if let Some(v) = ov.runs {
            cfg.runs = v;
        }
        if let Some(v) = ov.seed {
            cfg.seed = v;
        }
        if let Some(v) = &ov.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = &ov.families {
            cfg.families = v.clone();
        }
        if let Some(v) = ov.n_train {
            cfg.n_train = v;
        }
        if let Some(v) = ov.restarts {
            cfg.baseline_restarts = Some(v);
            cfg.gp2_restarts = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.n_train == 0 {
            return bad("n_train must be at least 1");
        }
        if self.families.is_empty() {
            return bad("at least one model family is required");
        }
        if !(self.sigma_y >= 0.0 && self.sigma_y.is_finite()) {
            return bad("sigma_y must be finite and non-negative");
        }
        if self.baseline_restarts == Some(0) || self.gp2_restarts == Some(0) || self.max_iters == 0 {
            return bad("restarts and max_iters must be at least 1");
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2");
        }
        let t = &self.trajectory;
        if t.initial_states == 0 || t.points < 2 || !(t.horizon > 0.0) {
            return bad("trajectory needs initial_states ≥ 1, points ≥ 2 and a positive horizon");
        }
        if self.transfer.n_source == 0 || self.infer_abar.n_train == 0 || self.infer_abar.points_per_dim < 2 {
            return bad("transfer and infer_abar settings must be positive");
        }
        gauss_gp::systems::BenchmarkSystem::from_config(&self.system).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    pub fn data_seed(&self, run: usize) -> u64 {
        self.seed + run as u64
    }

    pub fn train_seed(&self, run: usize) -> u64 {
        self.seed + 1000 + run as u64
    }

    /// SHA-256 of the canonical JSON, excluding the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let c = ExperimentConfig::default();
        let s = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), c);
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn flags_override_file_values() {
        let ov = Overrides {
            system: Some(SystemName::Duffing),
            runs: Some(3),
            ..Default::default()
        };
        let c = ExperimentConfig::load(None, &ov).unwrap();
        assert_eq!(c.system.name(), SystemName::Duffing);
        assert_eq!(c.runs, 3);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let ov = Overrides {
            runs: Some(0),
            ..Default::default()
        };
        assert!(matches!(ExperimentConfig::load(None, &ov), Err(CliError::Config(_))));
        let mut c = ExperimentConfig::default();
        c.schema_version = 99;
        assert!(c.validate().is_err());
    }
}
