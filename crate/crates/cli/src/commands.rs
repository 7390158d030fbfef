//! Subcommand implementations. Each returns the files it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gauss_gp::datagen::{
    analytic_targets, dataset_from_inputs, load_dataset, make_dataset, points_per_dim_for, prediction_grid,
    prediction_grid_in, sample_constrained_inputs, sample_constrained_inputs_in, save_dataset, Dataset,
};
use gauss_gp::eval::report::{band_csv, hstack, matrix_csv};
use gauss_gp::eval::{
    constraint_drift, max_constraint_error, records_to_csv, rmse_normalized, rollout, surface_distance_series,
    DerivSource, EvalReport, Rk45Config, RunRecord,
};
use gauss_gp::gp2::{gp2_prior, transfer_predict, MeanMode};
use gauss_gp::systems::{BenchmarkSystem, Interval};
use gauss_gp::train::{fit_family, trace_csv, FittedModel, ModelFamily, ModelFile, TrainConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{read_json, Header, Layout};

/// Row label of the analytic reference in reports.
pub const ANALYTIC: &str = "analytic";

/// Model file as written by `fit`: the library's persisted model plus timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitEntry {
    #[serde(flatten)]
    pub model: ModelFile,
    pub fit_seconds: f64,
}

pub struct Context {
    pub cfg: ExperimentConfig,
    pub sys: BenchmarkSystem,
    pub layout: Layout,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        let sys = BenchmarkSystem::from_config(&cfg.system).map_err(|e| CliError::Config(e.to_string()))?;
        let layout = Layout::new(cfg.out_dir(), Header::new(&cfg.hash()));
        Ok(Self { cfg, sys, layout })
    }

    fn train_config(&self, family: ModelFamily, run: usize) -> TrainConfig {
        let mut tc = family.default_train_config(self.cfg.train_seed(run));
        let restarts = if family.is_gp2() {
            self.cfg.gp2_restarts
        } else {
            self.cfg.baseline_restarts
        };
        if let Some(r) = restarts {
            tc.restarts = r;
        }
        tc.max_iters = self.cfg.max_iters;
        tc
    }

    fn write_config(&self) -> Result<PathBuf, CliError> {
        // The output location is implied by where the file lives.
        let mut cfg = self.cfg.clone();
        cfg.out = None;
        let p = self.layout.root.join("config.json");
        self.layout.write_json(&p, &cfg)?;
        Ok(p)
    }

    /// Loads the run's dataset, generating it first if absent.
    fn dataset(&self, run: usize) -> Result<Dataset, CliError> {
        let path = self.layout.dataset(run);
        if !path.exists() {
            self.write_dataset(run)?;
        }
        Ok(load_dataset(&path)?)
    }

    fn write_dataset(&self, run: usize) -> Result<PathBuf, CliError> {
        let ds = make_dataset(&self.sys, self.cfg.n_train, self.cfg.sigma_y, self.cfg.data_seed(run))?;
        let path = self.layout.dataset(run);
        self.layout.ensure_parent(&path)?;
        save_dataset(&ds, &path, Some(&self.layout.header.line())).map_err(|e| match e {
            gauss_gp::Error::Io(source) => CliError::io(&path, source),
            other => other.into(),
        })?;
        Ok(path)
    }

    fn load_model(&self, family: ModelFamily, run: usize) -> Result<Option<(FitEntry, FittedModel)>, CliError> {
        let path = self.layout.model(family.as_str(), run);
        if !path.exists() {
            return Ok(None);
        }
        let (_, entry): (Header, FitEntry) = read_json(&path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let ds = load_dataset(&dir.join(&entry.model.dataset))?;
        let sys = BenchmarkSystem::from_config(&entry.model.system).map_err(|e| CliError::Config(e.to_string()))?;
        let fitted = entry.model.restore(&sys, &ds)?;
        Ok(Some((entry, fitted)))
    }
}

/// Fails with `Partial` when some work items failed.
fn finish(written: Vec<PathBuf>, failed: usize, total: usize) -> Result<Vec<PathBuf>, CliError> {
    if failed > 0 {
        Err(CliError::Partial { failed, total })
    } else {
        Ok(written)
    }
}

pub fn generate(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let mut out = vec![ctx.write_config()?];
    for run in 0..ctx.cfg.runs {
        out.push(ctx.write_dataset(run)?);
    }
    Ok(out)
}

pub fn fit(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let mut out = vec![ctx.write_config()?];
    let mut failed = 0;
    let total = ctx.cfg.runs * ctx.cfg.families.len();
    for run in 0..ctx.cfg.runs {
        let ds = ctx.dataset(run)?;
        for &family in &ctx.cfg.families {
            let tc = ctx.train_config(family, run);
            let t0 = Instant::now();
            match fit_family(family, &ctx.sys, &ds, &tc) {
                Ok((fitted, result)) => {
                    let entry = FitEntry {
                        model: ModelFile {
                            version: gauss_gp::train::family::MODEL_FILE_VERSION,
                            family,
                            system: ctx.cfg.system.clone(),
                            params: result.model.clone(),
                            theta: fitted.theta(),
                            lml: result.lml,
                            best_restart: result.best_restart,
                            restarts: tc.restarts,
                            train_seed: tc.seed,
                            norm: ds.norm.clone(),
                            dataset: format!("../../data/run_{run:03}.csv"),
                            data_seed: ds.seed,
                        },
                        fit_seconds: t0.elapsed().as_secs_f64(),
                    };
                    let mp = ctx.layout.model(family.as_str(), run);
                    ctx.layout.write_json(&mp, &entry)?;
                    let tp = ctx.layout.trace(family.as_str(), run);
                    ctx.layout.write_text(&tp, &trace_csv(&result.traces))?;
                    out.extend([mp, tp]);
                }
                Err(e) => {
                    eprintln!("fit {family} run {run}: {e}");
                    failed += 1;
                }
            }
        }
    }
    finish(out, failed, total)
}

fn grid(ctx: &Context) -> Result<DMatrix<f64>, CliError> {
    Ok(prediction_grid(&ctx.sys, points_per_dim_for(&ctx.sys, ctx.cfg.grid_points))?)
}

pub fn report(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let system = ctx.sys.name.as_str().to_string();
    let grid = grid(ctx)?;
    let truth = analytic_targets(&ctx.sys, &grid)?;
    let analytic_error = max_constraint_error(&truth, &grid, &ctx.sys)?;
    let mut records = Vec::new();
    let mut expected = vec![(system.clone(), ANALYTIC.to_string())];
    for run in 0..ctx.cfg.runs {
        records.push(RunRecord {
            system: system.clone(),
            family: ANALYTIC.into(),
            run,
            seed: ctx.cfg.data_seed(run),
            rmse: 0.0,
            max_constraint_error: analytic_error,
            lml: None,
            seconds: 0.0,
        });
    }
    let mut failed = 0;
    for &family in &ctx.cfg.families {
        expected.push((system.clone(), family.as_str().to_string()));
        for run in 0..ctx.cfg.runs {
            let loaded = match ctx.load_model(family, run) {
                Ok(Some(m)) => m,
                Ok(None) => continue,
                Err(e) => {
                    eprintln!("report {family} run {run}: {e}");
                    continue;
                }
            };
            let (entry, fitted) = loaded;
            let evaluated = fitted.predict_mean(&grid).and_then(|pred| {
                Ok((
                    rmse_normalized(&pred, &truth, &entry.model.norm)?,
                    max_constraint_error(&pred, &grid, &ctx.sys)?,
                ))
            });
            match evaluated {
                Ok((rmse, ce)) => records.push(RunRecord {
                    system: system.clone(),
                    family: family.as_str().into(),
                    run,
                    seed: entry.model.data_seed,
                    rmse,
                    max_constraint_error: ce,
                    lml: Some(entry.model.lml),
                    seconds: entry.fit_seconds,
                }),
                Err(e) => {
                    eprintln!("report {family} run {run}: {e}");
                    failed += 1;
                }
            }
        }
    }
    let rep = EvalReport::aggregate(&records, &expected, ctx.cfg.runs)?;
    let dir = ctx.layout.dir("report");
    let files = [
        (dir.join("records.csv"), records_to_csv(&records)),
        (dir.join("summary.csv"), rep.to_csv()),
        (dir.join("table.txt"), rep.to_table()),
    ];
    let mut out = vec![ctx.write_config()?];
    for (p, body) in files {
        ctx.layout.write_text(&p, &body)?;
        out.push(p);
    }
    let missing: usize = rep.cells.iter().map(|c| c.missing).sum();
    finish(out, failed + missing, expected.len() * ctx.cfg.runs)
}

fn trajectory_csv(sys: &BenchmarkSystem, t: &[f64], rows: &DMatrix<f64>) -> Result<String, CliError> {
    let traj = gauss_gp::eval::Trajectory {
        t: t.to_vec(),
        rows: rows.clone(),
    };
    let tcol = DMatrix::from_column_slice(t.len(), 1, t);
    let drift = DMatrix::from_vec(t.len(), 1, constraint_drift(&traj, sys));
    let mut cols = vec!["time".to_string()];
    cols.extend(sys.layout.column_names());
    cols.push("constraint_residual".into());
    let mut blocks = vec![&tcol, rows, &drift];
    let dist = surface_distance_series(&traj, sys).map(|d| DMatrix::from_vec(d.len(), 1, d));
    if let Some(d) = &dist {
        cols.push("surface_distance".into());
        blocks.push(d);
    }
    Ok(matrix_csv(&cols, &hstack(&blocks)?)?)
}

pub fn trajectory(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let ts = &ctx.cfg.trajectory;
    let x0 = sample_constrained_inputs(&ctx.sys, ts.initial_states, ctx.cfg.seed + 2000)?;
    let mut models: Vec<(String, Option<FittedModel>)> = vec![(ANALYTIC.to_string(), None)];
    let mut failed = 0;
    for &family in &ctx.cfg.families {
        match ctx.load_model(family, ts.run) {
            Ok(Some((_, m))) => models.push((family.as_str().to_string(), Some(m))),
            Ok(None) => {
                eprintln!("trajectory: no {family} model for run {}", ts.run);
                failed += 1;
            }
            Err(e) => {
                eprintln!("trajectory: {family}: {e}");
                failed += 1;
            }
        }
    }
    let dir = ctx.layout.dir("trajectory");
    let mut out = vec![ctx.write_config()?];
    let mut summary = String::from("model,state,status,final_time,final_constraint_residual,final_surface_distance\n");
    for (name, model) in &models {
        let source = match model {
            Some(m) => DerivSource::Model(m),
            None => DerivSource::Analytic,
        };
        for s in 0..x0.nrows() {
            let row: Vec<f64> = x0.row(s).iter().copied().collect();
            match rollout(&ctx.sys, source, &row, ts.horizon, ts.points, &Rk45Config::default()) {
                Ok(traj) => {
                    let p = dir.join(name).join(format!("state_{s}.csv"));
                    ctx.layout.write_text(&p, &trajectory_csv(&ctx.sys, &traj.t, &traj.rows)?)?;
                    out.push(p);
                    let drift = constraint_drift(&traj, &ctx.sys);
                    let dist = surface_distance_series(&traj, &ctx.sys)
                        .and_then(|d| d.last().copied())
                        .map_or("NA".to_string(), |v| v.to_string());
                    summary.push_str(&format!(
                        "{name},{s},ok,{},{},{dist}\n",
                        traj.t.last().copied().unwrap_or(0.0),
                        drift.last().copied().unwrap_or(0.0)
                    ));
                }
                Err(e) => {
                    let t = match &e {
                        gauss_gp::Error::Integration { t, .. } => t.to_string(),
                        _ => "NA".into(),
                    };
                    eprintln!("trajectory {name} state {s}: {e}");
                    summary.push_str(&format!("{name},{s},failed,{t},NA,NA\n"));
                    failed += 1;
                }
            }
        }
    }
    let p = dir.join("summary.csv");
    ctx.layout.write_text(&p, &summary)?;
    out.push(p);
    finish(out, failed, models.len().max(1) * x0.nrows())
}

fn gp2_fixed_zero() -> ModelFamily {
    ModelFamily::Gp2 {
        estimate_theta: false,
        mean: MeanMode::Zero,
    }
}

#[derive(Debug, Serialize)]
struct TransferSummary {
    source_observations: usize,
    grid_points: usize,
    rmse: f64,
    prior_rmse: f64,
    max_constraint_error: f64,
}

pub fn transfer(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let target = BenchmarkSystem::transfer_surface(&ctx.sys).map_err(|e| CliError::Config(e.to_string()))?;
    let ds = make_dataset(&ctx.sys, ctx.cfg.transfer.n_source, ctx.cfg.sigma_y, ctx.cfg.seed + 3000)?;
    let family = gp2_fixed_zero();
    let (fitted, _) = fit_family(family, &ctx.sys, &ds, &ctx.train_config(family, 0))?;
    let FittedModel::Gp2 { posterior, .. } = &fitted else {
        unreachable!("GP² family yields a GP² model")
    };
    let grid = prediction_grid(&target, points_per_dim_for(&target, ctx.cfg.transfer.grid_points))?;
    let truth = analytic_targets(&target, &grid)?;
    let pred = transfer_predict(posterior, &target.configuration(), &grid)?;
    let prior_mean = gp2_prior(&posterior.model.abar_prior(), target.configuration())?.prior_mean(&grid)?;
    let summary = TransferSummary {
        source_observations: ds.len(),
        grid_points: grid.nrows(),
        rmse: rmse_normalized(&pred.mean, &truth, &ds.norm)?,
        prior_rmse: rmse_normalized(&prior_mean, &truth, &ds.norm)?,
        max_constraint_error: max_constraint_error(&pred.mean, &grid, &target)?,
    };
    let dir = ctx.layout.dir("transfer");
    let names = target.layout.column_names();
    let mut truth_cols: Vec<String> = (1..=truth.ncols()).map(|i| format!("true_qdd{i}")).collect();
    let band = band_csv(&names, &grid, &pred.mean, &pred.var, "qdd")?;
    let truth_csv = {
        let mut cols = names.clone();
        cols.append(&mut truth_cols);
        matrix_csv(&cols, &hstack(&[&grid, &truth])?)?
    };
    let files = [
        (dir.join("predictions.csv"), band),
        (dir.join("truth.csv"), truth_csv),
    ];
    let mut out = vec![ctx.write_config()?];
    for (p, body) in files {
        ctx.layout.write_text(&p, &body)?;
        out.push(p);
    }
    let p = dir.join("summary.json");
    ctx.layout.write_json(&p, &summary)?;
    out.push(p);
    Ok(out)
}

/// State domain with all velocities and controls pinned to zero.
pub fn at_rest_domain(sys: &BenchmarkSystem) -> Vec<Interval> {
    let lay = sys.layout;
    let mut d = sys.state_domain.clone();
    for i in 0..lay.n {
        d[lay.qdot(i)] = Interval::point(0.0);
    }
    for i in 0..lay.n_u {
        d[lay.u(i)] = Interval::point(0.0);
    }
    d
}

#[derive(Debug, Serialize)]
struct AbarSummary {
    training_points: usize,
    grid_points: usize,
    /// Largest `|mean − ā*|` per component over the grid.
    max_abs_error: Vec<f64>,
}

pub fn infer_abar(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let s = &ctx.cfg.infer_abar;
    let domain = at_rest_domain(&ctx.sys);
    let seed = ctx.cfg.seed + 4000;
    let x = sample_constrained_inputs_in(&ctx.sys, &domain, s.n_train, seed)?;
    let ds = dataset_from_inputs(&ctx.sys, x, ctx.cfg.sigma_y, seed)?;
    let family = gp2_fixed_zero();
    let (fitted, _) = fit_family(family, &ctx.sys, &ds, &ctx.train_config(family, 0))?;
    let FittedModel::Gp2 { posterior, .. } = &fitted else {
        unreachable!("GP² family yields a GP² model")
    };
    let grid = prediction_grid_in(&ctx.sys, &domain, s.points_per_dim)?;
    let post = posterior.infer_abar_marginal(&grid)?;
    let n = ctx.sys.dof();
    let truth = DMatrix::from_fn(grid.nrows(), n, |k, i| {
        let row: Vec<f64> = grid.row(k).iter().copied().collect();
        ctx.sys.abar(&row, &ctx.sys.theta_star)[i]
    });
    let max_abs_error = (0..n).map(|i| (post.mean.column(i) - truth.column(i)).amax()).collect();
    let names = ctx.sys.layout.column_names();
    let mut cols = names.clone();
    cols.extend((1..=n).map(|i| format!("true_abar{i}")));
    let dir = ctx.layout.dir("infer_abar");
    let files = [
        (dir.join("posterior.csv"), band_csv(&names, &grid, &post.mean, &post.var, "abar")?),
        (dir.join("truth.csv"), matrix_csv(&cols, &hstack(&[&grid, &truth])?)?),
        (dir.join("training.csv"), {
            let mut c = names.clone();
            c.extend((1..=n).map(|i| format!("y{i}")));
            matrix_csv(&c, &hstack(&[&ds.x, &ds.y])?)?
        }),
    ];
    let mut out = vec![ctx.write_config()?];
    for (p, body) in files {
        ctx.layout.write_text(&p, &body)?;
        out.push(p);
    }
    let p = dir.join("summary.json");
    ctx.layout.write_json(
        &p,
        &AbarSummary {
            training_points: ds.len(),
            grid_points: grid.nrows(),
            max_abs_error,
        },
    )?;
    out.push(p);
    Ok(out)
}
