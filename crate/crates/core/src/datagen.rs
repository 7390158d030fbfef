//! Training/test data: on-manifold input sampling, analytic targets with
//! Gaussian observation noise, equidistant prediction grids and CSV storage.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanics::InputLayout;
use crate::systems::{BenchmarkSystem, Interval, SystemName};

/// Default observation noise, relative to the per-output standard deviation
/// of the noiseless targets.
pub const DEFAULT_SIGMA_Y: f64 = 1e-2;

/// Tolerance used to accept a projected sample as on-manifold.
const MANIFOLD_TOL: f64 = 1e-10;

/// Per-column affine normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

fn column_stats(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows().max(1) as f64;
    let mut means = Vec::with_capacity(m.ncols());
    let mut stds = Vec::with_capacity(m.ncols());
    for col in m.column_iter() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        means.push(mean);
        // constant columns (e.g. time for autonomous systems) keep unit scale
        stds.push(if std > 1e-12 * (1.0 + mean.abs()) { std } else { 1.0 });
    }
    (means, stds)
}

fn apply(m: &DMatrix<f64>, mean: &[f64], std: &[f64], forward: bool) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        for v in col.iter_mut() {
            *v = if forward {
                (*v - mean[j]) / std[j]
            } else {
                *v * std[j] + mean[j]
            };
        }
    }
    out
}

impl NormStats {
    pub fn from_data(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let (x_mean, x_std) = column_stats(x);
        let (y_mean, y_std) = column_stats(y);
        Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    pub fn normalize_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        apply(x, &self.x_mean, &self.x_std, true)
    }

    pub fn denormalize_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        apply(x, &self.x_mean, &self.x_std, false)
    }

    pub fn normalize_y(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        apply(y, &self.y_mean, &self.y_std, true)
    }

    pub fn denormalize_y(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        apply(y, &self.y_mean, &self.y_std, false)
    }

    /// Scales a covariance of normalized outputs back to physical units
    /// (only the diagonal per-output variance scaling).
    pub fn denormalize_y_var(&self, var: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = var.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= self.y_std[j] * self.y_std[j];
        }
        out
    }
}

/// Inputs `X` (N×D), noisy targets `Y` (N×n) and their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub sigma_y: f64,
    pub norm: NormStats,
    pub system: SystemName,
    pub theta_p: Vec<f64>,
    pub seed: u64,
    pub layout: InputLayout,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = self.layout.column_names();
        names.extend((1..=self.y.ncols()).map(|i| format!("y{i}")));
        names
    }
}

fn input_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Uniform samples from the system's state domain, projected onto its
/// constraint manifold (true parameters).
pub fn sample_constrained_inputs(
    sys: &BenchmarkSystem,
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    sample_constrained_inputs_in(sys, &sys.state_domain, count, seed)
}

/// As [`sample_constrained_inputs`] but over a caller-supplied domain (for
/// example with velocities and controls pinned to zero).
pub fn sample_constrained_inputs_in(
    sys: &BenchmarkSystem,
    domain: &[Interval],
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let d = sys.input_dim();
    if domain.len() != d {
        return Err(Error::Shape(format!(
            "domain has {} intervals, inputs have {d} columns",
            domain.len()
        )));
    }
    let mut rng = input_rng(seed);
    let mut out = DMatrix::zeros(count, d);
    let mut row = vec![0.0; d];
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < count {
        attempts += 1;
        if attempts > 100 * count {
            return Err(Error::Sampling(format!(
                "only {accepted} of {count} samples landed on the manifold"
            )));
        }
        for (v, iv) in row.iter_mut().zip(domain) {
            *v = if iv.width() > 0.0 {
                rng.random_range(iv.lo..=iv.hi)
            } else {
                iv.lo
            };
        }
        sys.project_row(&mut row, &sys.theta_star);
        if !on_manifold(sys, &row) {
            continue;
        }
        for (j, v) in row.iter().enumerate() {
            out[(accepted, j)] = *v;
        }
        accepted += 1;
    }
    Ok(out)
}

fn on_manifold(sys: &BenchmarkSystem, row: &[f64]) -> bool {
    let c = sys.constraint.as_ref();
    row.iter().all(|v| v.is_finite())
        && c.residual(row, sys.layout, &sys.theta_star).abs() <= MANIFOLD_TOL
        && c.velocity_residual(row, sys.layout, &sys.theta_star).abs() <= MANIFOLD_TOL
}

/// Analytic constrained accelerations (true parameters) at every row.
pub fn analytic_targets(sys: &BenchmarkSystem, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sys.dof();
    let mut y = DMatrix::zeros(x.nrows(), n);
    let cfg = sys.configuration();
    for k in 0..x.nrows() {
        let row: Vec<f64> = x.row(k).iter().copied().collect();
        let qdd = cfg.acceleration_row(&row)?;
        y.row_mut(k).copy_from(&qdd.transpose());
    }
    Ok(y)
}

/// Samples `count` on-manifold inputs and noisy analytic targets.
///
/// Noise is `N(0, (sigma_y · std_i)²)` on output `i`, where `std_i` is the
/// standard deviation of the noiseless targets, so `sigma_y` is expressed in
/// normalized target units.
pub fn make_dataset(
    sys: &BenchmarkSystem,
    count: usize,
    sigma_y: f64,
    seed: u64,
) -> Result<Dataset> {
    let x = sample_constrained_inputs(sys, count, seed)?;
    dataset_from_inputs(sys, x, sigma_y, seed)
}

/// Builds a dataset on given inputs (assumed on-manifold).
pub fn dataset_from_inputs(
    sys: &BenchmarkSystem,
    x: DMatrix<f64>,
    sigma_y: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(sigma_y >= 0.0) || !sigma_y.is_finite() {
        return Err(Error::Domain(format!("sigma_y must be >= 0, got {sigma_y}")));
    }
    if x.nrows() == 0 {
        return Err(Error::Domain("dataset needs at least one row".into()));
    }
    let mut y = analytic_targets(sys, &x)?;
    if sigma_y > 0.0 {
        let (_, clean_std) = column_stats(&y);
        let mut rng = noise_rng(seed);
        for j in 0..y.ncols() {
            for k in 0..y.nrows() {
                let e: f64 = StandardNormal.sample(&mut rng);
                y[(k, j)] += sigma_y * clean_std[j] * e;
            }
        }
    }
    let norm = NormStats::from_data(&x, &y);
    Ok(Dataset {
        x,
        y,
        sigma_y,
        norm,
        system: sys.name,
        theta_p: sys.theta_star.clone(),
        seed,
        layout: sys.layout,
    })
}

/// Equidistant grid over the free columns of the state domain, with
/// dependent columns projected onto the manifold.
pub fn prediction_grid(sys: &BenchmarkSystem, points_per_dim: usize) -> Result<DMatrix<f64>> {
    prediction_grid_in(sys, &sys.state_domain, points_per_dim)
}

/// Smallest per-dimension resolution whose full grid has at least
/// `min_points` points (and at least 2 per dimension).
pub fn points_per_dim_for(sys: &BenchmarkSystem, min_points: usize) -> usize {
    let d = sys.free_columns().len() as u32;
    let mut ppd = 2usize;
    while ppd.checked_pow(d).is_some_and(|t| t < min_points) {
        ppd += 1;
    }
    ppd
}

pub fn prediction_grid_in(
    sys: &BenchmarkSystem,
    domain: &[Interval],
    points_per_dim: usize,
) -> Result<DMatrix<f64>> {
    if points_per_dim < 2 {
        return Err(Error::Domain("grid needs at least 2 points per dimension".into()));
    }
    let dep = sys.constraint.dependent_columns(sys.layout);
    let free: Vec<usize> = (0..sys.input_dim())
        .filter(|c| !dep.contains(c) && domain[*c].width() > 0.0)
        .collect();
    let total = points_per_dim
        .checked_pow(free.len() as u32)
        .ok_or_else(|| Error::Domain("grid too large".into()))?;
    let d = sys.input_dim();
    let mut out = DMatrix::zeros(total, d);
    let mut row: Vec<f64> = domain.iter().map(|iv| iv.lo).collect();
    let step = (points_per_dim - 1) as f64;
    for g in 0..total {
        let mut idx = g;
        for &c in free.iter().rev() {
            let k = idx % points_per_dim;
            idx /= points_per_dim;
            let iv = domain[c];
            row[c] = if k == points_per_dim - 1 {
                iv.hi
            } else {
                iv.lo + iv.width() * k as f64 / step
            };
        }
        sys.project_row(&mut row, &sys.theta_star);
        for (j, v) in row.iter().enumerate() {
            out[(g, j)] = *v;
        }
    }
    Ok(out)
}

/// Sidecar metadata stored next to a dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub system: SystemName,
    pub theta_p: Vec<f64>,
    pub sigma_y: f64,
    pub seed: u64,
    pub layout: InputLayout,
    pub norm: NormStats,
    #[serde(default)]
    pub header: Option<String>,
}

pub fn meta_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the dataset as CSV plus a JSON sidecar. `comment`, when given, is
/// emitted as a leading `#` line.
pub fn save_dataset(ds: &Dataset, path: &Path, comment: Option<&str>) -> Result<()> {
    let mut body = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            body.push_str("# ");
            body.push_str(line);
            body.push('\n');
        }
    }
    body.push_str(&ds.column_names().join(","));
    body.push('\n');
    for k in 0..ds.len() {
        let fields: Vec<String> = ds
            .x
            .row(k)
            .iter()
            .chain(ds.y.row(k).iter())
            .map(|v| fmt17(*v))
            .collect();
        body.push_str(&fields.join(","));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())?;
    let meta = DatasetMeta {
        system: ds.system,
        theta_p: ds.theta_p.clone(),
        sigma_y: ds.sigma_y,
        seed: ds.seed,
        layout: ds.layout,
        norm: ds.norm.clone(),
        header: comment.map(str::to_owned),
    };
    write_atomic(&meta_path(path), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(())
}

/// Writes to a temporary sibling and renames over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(meta_path(path))?)?;
    let text = fs::read_to_string(path)?;
    let (x, y) = parse_dataset_csv(&text, meta.layout)?;
    Ok(Dataset {
        x,
        y,
        sigma_y: meta.sigma_y,
        norm: meta.norm,
        system: meta.system,
        theta_p: meta.theta_p,
        seed: meta.seed,
        layout: meta.layout,
    })
}

/// Parses the dataset CSV body. Columns are matched by header name.
pub fn parse_dataset_csv(text: &str, layout: InputLayout) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut expected = layout.column_names();
    expected.extend((1..=layout.n).map(|i| format!("y{i}")));
    let mut index = Vec::with_capacity(expected.len());
    for e in &expected {
        let pos = names.iter().position(|n| n == e).ok_or_else(|| Error::Parse {
            line: hline + 1,
            msg: format!("missing column '{e}'"),
        })?;
        index.push(pos);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(Error::Parse {
                line: lno + 1,
                msg: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
        }
        let mut row = Vec::with_capacity(index.len());
        for &i in &index {
            let v: f64 = fields[i].parse().map_err(|_| Error::Parse {
                line: lno + 1,
                msg: format!("cannot parse '{}' as a number", fields[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lno + 1,
                    msg: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: hline + 1,
            msg: "no data rows".into(),
        });
    }
    let d = layout.dim();
    let n = layout.n;
    let x = DMatrix::from_fn(rows.len(), d, |k, j| rows[k][j]);
    let y = DMatrix::from_fn(rows.len(), n, |k, j| rows[k][d + j]);
    Ok((x, y))
}
