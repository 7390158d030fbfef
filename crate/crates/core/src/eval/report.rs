//! Per-run evaluation records, their aggregation into a summary table, and
//! plot-data CSV writers.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated (system, model, run) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub system: String,
    pub family: String,
    pub run: usize,
    pub seed: u64,
    pub rmse: f64,
    pub max_constraint_error: f64,
    /// Training objective; absent for the analytic reference.
    pub lml: Option<f64>,
    pub seconds: f64,
}

pub const RECORD_COLUMNS: [&str; 8] = [
    "system",
    "family",
    "run",
    "seed",
    "rmse",
    "max_constraint_error",
    "lml",
    "seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = Summary {
            mean: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        let mut sum = 0.0;
        for &v in values {
            sum += v;
            s.min = s.min.min(v);
            s.max = s.max.max(v);
        }
        // Clamp guards the last-ulp rounding of the mean of equal values.
        s.mean = (sum / values.len() as f64).clamp(s.min, s.max);
        Some(s)
    }
}

/// Aggregate over the runs of one (system, model) pair. `rmse` and
/// `max_constraint_error` are `None` when no run produced a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub system: String,
    pub family: String,
    pub runs: usize,
    pub missing: usize,
    pub rmse: Option<Summary>,
    pub max_constraint_error: Option<Summary>,
    pub seeds: Vec<u64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<ReportCell>,
}

impl EvalReport {
    /// Groups records by (system, family). Cells appear in the order of
    /// `expected` followed by any other pairs in order of first appearance;
    /// within a cell runs are sorted by index, so the result does not depend
    /// on record order. `expected_runs` sets the gap count of each cell.
    pub fn aggregate(records: &[RunRecord], expected: &[(String, String)], expected_runs: usize) -> Result<Self> {
        if let Some(r) = records
            .iter()
            .find(|r| !r.rmse.is_finite() || !r.max_constraint_error.is_finite() || !r.seconds.is_finite())
        {
            return Err(Error::Domain(format!(
                "non-finite metric for {} / {} run {}",
                r.system, r.family, r.run
            )));
        }
        let mut keys: Vec<(String, String)> = expected.to_vec();
        for r in records {
            let key = (r.system.clone(), r.family.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let cells = keys
            .into_iter()
            .map(|(system, family)| {
                let mut rs: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.system == system && r.family == family)
                    .collect();
                rs.sort_by_key(|r| r.run);
                let rmse: Vec<f64> = rs.iter().map(|r| r.rmse).collect();
                let ce: Vec<f64> = rs.iter().map(|r| r.max_constraint_error).collect();
                ReportCell {
                    runs: rs.len(),
                    missing: expected_runs.saturating_sub(rs.len()),
                    rmse: Summary::of(&rmse),
                    max_constraint_error: Summary::of(&ce),
                    seeds: rs.iter().map(|r| r.seed).collect(),
                    seconds: rs.iter().map(|r| r.seconds).sum(),
                    system,
                    family,
                }
            })
            .collect();
        Ok(Self { cells })
    }

    pub fn cell(&self, system: &str, family: &str) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.system == system && c.family == family)
    }

    /// Summary CSV; gaps are written as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "system,family,runs,missing,rmse_mean,rmse_min,rmse_max,\
             constraint_mean,constraint_min,constraint_max,seconds,seeds\n",
        );
        for c in &self.cells {
            let s = |x: &Option<Summary>| match x {
                Some(s) => format!("{},{},{}", s.mean, s.min, s.max),
                None => "NA,NA,NA".to_string(),
            };
            let seeds: Vec<String> = c.seeds.iter().map(u64::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.system,
                c.family,
                c.runs,
                c.missing,
                s(&c.rmse),
                s(&c.max_constraint_error),
                c.seconds,
                seeds.join(";")
            );
        }
        out
    }

    /// Fixed-width table with `mean [min, max]` per metric.
    pub fn to_table(&self) -> String {
        let fmt = |x: &Option<Summary>| match x {
            Some(s) => format!("{:.3e} [{:.1e}, {:.1e}]", s.mean, s.min, s.max),
            None => "-- missing --".to_string(),
        };
        let fw = self.cells.iter().map(|c| c.family.len()).max().unwrap_or(6).max(6);
        let mut out = format!(
            "{:<16} {:<fw$} {:>5}  {:<32} {:<32}\n",
            "system", "model", "runs", "normalized RMSE", "max constraint error"
        );
        for c in &self.cells {
            let runs = if c.missing > 0 {
                format!("{}/{}", c.runs, c.runs + c.missing)
            } else {
                c.runs.to_string()
            };
            let _ = writeln!(
                out,
                "{:<16} {:<fw$} {:>5}  {:<32} {:<32}",
                c.system,
                c.family,
                runs,
                fmt(&c.rmse),
                fmt(&c.max_constraint_error)
            );
        }
        out
    }
}

/// Serializes records as CSV. Floats use the shortest representation that
/// parses back to the same value.
pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = RECORD_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let lml = r.lml.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.system, r.family, r.run, r.seed, r.rmse, r.max_constraint_error, lml, r.seconds
        );
    }
    out
}

/// Parses the output of [`records_to_csv`]; `#` lines are skipped.
pub fn records_from_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    if header.split(',').map(str::trim).ne(RECORD_COLUMNS) {
        return Err(Error::Parse {
            line: hl + 1,
            msg: format!("unexpected header '{header}'"),
        });
    }
    let mut out = Vec::new();
    for (lno, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let perr = |msg: String| Error::Parse { line: lno + 1, msg };
        if f.len() != RECORD_COLUMNS.len() {
            return Err(perr(format!("expected {} fields, found {}", RECORD_COLUMNS.len(), f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse().map_err(|_| perr(format!("bad {} '{}'", RECORD_COLUMNS[i], f[i])))
        };
        out.push(RunRecord {
            system: f[0].to_string(),
            family: f[1].to_string(),
            run: f[2].parse().map_err(|_| perr(format!("bad run '{}'", f[2])))?,
            seed: f[3].parse().map_err(|_| perr(format!("bad seed '{}'", f[3])))?,
            rmse: num(4)?,
            max_constraint_error: num(5)?,
            lml: if f[6].is_empty() { None } else { Some(num(6)?) },
            seconds: num(7)?,
        });
    }
    Ok(out)
}

/// CSV of a matrix with the given column names, full precision.
pub fn matrix_csv(columns: &[String], m: &DMatrix<f64>) -> Result<String> {
    if columns.len() != m.ncols() {
        return Err(Error::Shape(format!("{} names for {} columns", columns.len(), m.ncols())));
    }
    let mut out = columns.join(",");
    out.push('\n');
    for row in m.row_iter() {
        let f: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&f.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Horizontally concatenates blocks that share a row count.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(Error::Shape("blocks differ in row count".into()));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    Ok(out)
}

/// Plot data for predictive marginals: inputs, mean, and a `±2σ` band per
/// output (`mean_i`, `lo_i`, `hi_i`).
pub fn band_csv(input_names: &[String], x: &DMatrix<f64>, mean: &DMatrix<f64>, var: &DMatrix<f64>, prefix: &str) -> Result<String> {
    if mean.shape() != var.shape() || mean.nrows() != x.nrows() {
        return Err(Error::Shape("mean, variance and inputs disagree".into()));
    }
    let sd = var.map(|v| v.max(0.0).sqrt());
    let lo = mean - &sd * 2.0;
    let hi = mean + &sd * 2.0;
    let n = mean.ncols();
    let mut cols = input_names.to_vec();
    let mut blocks: Vec<DMatrix<f64>> = vec![x.clone()];
    for i in 0..n {
        cols.push(format!("{prefix}{}_mean", i + 1));
        cols.push(format!("{prefix}{}_lo", i + 1));
        cols.push(format!("{prefix}{}_hi", i + 1));
        blocks.push(mean.columns(i, 1).into_owned());
        blocks.push(lo.columns(i, 1).into_owned());
        blocks.push(hi.columns(i, 1).into_owned());
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    matrix_csv(&cols, &hstack(&refs)?)
}
