//! Multi-output GP prior, conditioning and marginal likelihood.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kernel::{projections, rows_of, Kernel, ParamKind, ProjectionRows};
use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, max_abs_entry, CholFactor, JitterPolicy};

/// A mean function `x ↦ μ(x) ∈ R^n` over raw input rows.
pub type MeanFn = Arc<dyn Fn(&[f64]) -> Result<DVector<f64>> + Send + Sync>;

#[derive(Clone, Default)]
pub enum Mean {
    #[default]
    Zero,
    Function(MeanFn),
}

impl fmt::Debug for Mean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Function(_) => f.write_str("Function"),
        }
    }
}

impl Mean {
    pub fn function(f: impl Fn(&[f64]) -> Result<DVector<f64>> + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn eval(&self, row: &[f64], outputs: usize) -> Result<DVector<f64>> {
        match self {
            Self::Zero => Ok(DVector::zeros(outputs)),
            Self::Function(f) => {
                let v = f(row)?;
                if v.len() != outputs {
                    return Err(Error::Shape(format!(
                        "mean returned {} values, expected {outputs}",
                        v.len()
                    )));
                }
                Ok(v)
            }
        }
    }

    /// Mean at every row as an N×n matrix.
    pub fn matrix(&self, rows: &[Vec<f64>], outputs: usize) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(rows.len(), outputs);
        if let Self::Function(_) = self {
            for (k, r) in rows.iter().enumerate() {
                out.row_mut(k).copy_from(&self.eval(r, outputs)?.transpose());
            }
        }
        Ok(out)
    }
}

/// Output-major flattening of an N×n target matrix.
pub fn flatten(y: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(y.as_slice())
}

/// Inverse of [`flatten`].
pub fn unflatten(v: &DVector<f64>, rows: usize, outputs: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, outputs, v.as_slice())
}

/// A GP prior with Gaussian observation noise per output.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub mean: Mean,
    pub kernel: Kernel,
    /// Log noise variance per output.
    pub log_noise: Vec<f64>,
    pub jitter: JitterPolicy,
}

impl GpModel {
    pub fn new(kernel: Kernel, noise_variance: f64) -> Self {
        let n = kernel.outputs();
        Self {
            mean: Mean::Zero,
            kernel,
            log_noise: vec![noise_variance.ln(); n],
            jitter: JitterPolicy::default(),
        }
    }

    pub fn with_mean(mut self, mean: Mean) -> Self {
        self.mean = mean;
        self
    }

    pub fn outputs(&self) -> usize {
        self.kernel.outputs()
    }

    /// Kernel hyperparameters followed by the log noise variances.
    pub fn num_params(&self) -> usize {
        self.kernel.num_params() + self.log_noise.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.kernel.params();
        p.extend(&self.log_noise);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let k = self.kernel.num_params();
        self.kernel.set_params(&p[..k]);
        self.log_noise.copy_from_slice(&p[k..]);
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut v = self.kernel.param_kinds();
        v.extend((0..self.log_noise.len()).map(|output| ParamKind::LogNoise { output }));
        v
    }

    fn validate(&self, x: &DMatrix<f64>, y: Option<&DMatrix<f64>>) -> Result<()> {
        ensure_finite(x, "GP inputs")?;
        self.kernel.validate(x.ncols())?;
        if self.log_noise.len() != self.outputs() || self.log_noise.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("invalid noise variances".into()));
        }
        if let Some(y) = y {
            ensure_finite(y, "GP targets")?;
            if y.nrows() != x.nrows() || y.ncols() != self.outputs() {
                return Err(Error::Shape(format!(
                    "targets are {}x{}, expected {}x{}",
                    y.nrows(),
                    y.ncols(),
                    x.nrows(),
                    self.outputs()
                )));
            }
        }
        Ok(())
    }

    /// Prior mean at each row (N×n).
    pub fn prior_mean(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.mean.matrix(&rows_of(x), self.outputs())
    }

    /// `K(X, X) + diag(σ_y²)` in output-major order.
    pub fn noisy_gram(&self, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let mut k = self.kernel.gram_rows(rows, rows)?;
        add_noise(&mut k, &self.log_noise, rows.len());
        Ok(k)
    }

    pub fn condition(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<PosteriorGp> {
        self.validate(x, Some(y))?;
        let rows = rows_of(x);
        let r = flatten(y) - flatten(&self.mean.matrix(&rows, self.outputs())?);
        let (chol, alpha) = if rows.is_empty() {
            (None, DVector::zeros(0))
        } else {
            let c = CholFactor::new(&self.noisy_gram(&rows)?, self.jitter)?;
            let a = c.solve_vec(&r);
            (Some(c), a)
        };
        let train_proj = match &self.kernel {
            Kernel::Transformed(t) => Some(projections(&t.config, &rows)?),
            _ => None,
        };
        Ok(PosteriorGp {
            prior: self.clone(),
            rows,
            train_proj,
            chol,
            alpha,
        })
    }

    pub fn log_marginal_likelihood(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        self.lml_impl(x, y, false).map(|(v, _)| v)
    }

    /// LML and its gradient with respect to [`GpModel::params`].
    pub fn lml_with_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
        self.lml_impl(x, y, true)
    }

    fn lml_impl(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, grad: bool) -> Result<(f64, Vec<f64>)> {
        self.validate(x, Some(y))?;
        let rows = rows_of(x);
        let nn = rows.len();
        let n = self.outputs();
        let mu = self.mean.matrix(&rows, n)?;
        let resid = y - mu;
        if nn == 0 {
            return Ok((0.0, vec![0.0; self.num_params()]));
        }
        if let Kernel::Independent(ks) = &self.kernel {
            // Block-diagonal Gram: each output is a separate GP.
            let mut total = 0.0;
            let mut g = Vec::with_capacity(self.num_params());
            let mut g_noise = Vec::with_capacity(n);
            for (i, k) in ks.iter().enumerate() {
                let mut ki = k.gram(&rows, &rows);
                let s2 = self.log_noise[i].exp();
                for d in 0..nn {
                    ki[(d, d)] += s2;
                }
                let c = CholFactor::new(&ki, self.jitter)?;
                let r = resid.column(i).into_owned();
                let a = c.solve_vec(&r);
                total += -0.5 * r.dot(&a) - 0.5 * c.log_det() - 0.5 * nn as f64 * (2.0 * PI).ln();
                if grad {
                    let w = lml_weights(&a, &c);
                    g.extend(k.grad_trace(&rows, &w));
                    g_noise.push(w.trace() * s2);
                }
            }
            g.extend(g_noise);
            return finite_lml(total, g);
        }
        let kmat = self.noisy_gram(&rows)?;
        let c = CholFactor::new(&kmat, self.jitter)?;
        let r = flatten(&resid);
        let a = c.solve_vec(&r);
        let total =
            -0.5 * r.dot(&a) - 0.5 * c.log_det() - 0.5 * (n * nn) as f64 * (2.0 * PI).ln();
        if !grad {
            return finite_lml(total, vec![]);
        }
        let w = lml_weights(&a, &c);
        let g = self.grad_from_weights(&rows, &w)?;
        finite_lml(total, g)
    }

    fn grad_from_weights(&self, rows: &[Vec<f64>], w: &DMatrix<f64>) -> Result<Vec<f64>> {
        let nn = rows.len();
        let mut g = self.kernel.grad_trace(rows, w)?;
        for (i, ln) in self.log_noise.iter().enumerate() {
            let tr: f64 = (0..nn).map(|k| w[(i * nn + k, i * nn + k)]).sum();
            g.push(tr * ln.exp());
        }
        Ok(g)
    }

    /// LML, its gradient, `α = K⁻¹ r` and the weights `W`, for callers that
    /// chain extra parameters through the mean and the Gram matrix.
    pub(crate) fn lml_terms(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LmlTerms> {
        self.validate(x, Some(y))?;
        let rows = rows_of(x);
        let n = self.outputs();
        let r = flatten(&(y - self.mean.matrix(&rows, n)?));
        let c = CholFactor::new(&self.noisy_gram(&rows)?, self.jitter)?;
        let alpha = c.solve_vec(&r);
        let value = -0.5 * r.dot(&alpha) - 0.5 * c.log_det() - 0.5 * r.len() as f64 * (2.0 * PI).ln();
        let w = lml_weights(&alpha, &c);
        let (value, grad) = finite_lml(value, self.grad_from_weights(&rows, &w)?)?;
        Ok(LmlTerms { value, grad, alpha, w })
    }

    /// Joint prior draws at `x`, one flattened sample per row.
    pub fn sample_prior(&self, x: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.validate(x, None)?;
        let rows = rows_of(x);
        let mean = flatten(&self.mean.matrix(&rows, self.outputs())?);
        let cov = self.kernel.gram_rows(&rows, &rows)?;
        sample_mvn(&mean, &cov, count, seed, self.jitter)
    }
}

pub(crate) struct LmlTerms {
    pub value: f64,
    pub grad: Vec<f64>,
    pub alpha: DVector<f64>,
    pub w: DMatrix<f64>,
}

fn finite_lml(v: f64, g: Vec<f64>) -> Result<(f64, Vec<f64>)> {
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("log marginal likelihood"));
    }
    Ok((v, g))
}

/// `½(ααᵀ − K⁻¹)`, so that `∂LML/∂θ = Σ W ∘ ∂K/∂θ`.
fn lml_weights(alpha: &DVector<f64>, c: &CholFactor) -> DMatrix<f64> {
    let mut w = c.inverse();
    w.ger(1.0, alpha, alpha, -1.0);
    w * 0.5
}

fn add_noise(k: &mut DMatrix<f64>, log_noise: &[f64], nn: usize) {
    for (i, ln) in log_noise.iter().enumerate() {
        let s2 = ln.exp();
        for d in 0..nn {
            k[(i * nn + d, i * nn + d)] += s2;
        }
    }
}

/// Draws `count` samples of `N(mean, cov)` as rows. A zero covariance
/// returns the mean exactly.
pub fn sample_mvn(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    count: usize,
    seed: u64,
    jitter: JitterPolicy,
) -> Result<DMatrix<f64>> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::Shape("covariance does not match mean".into()));
    }
    let mut out = DMatrix::zeros(count, d);
    for s in 0..count {
        out.row_mut(s).copy_from(&mean.transpose());
    }
    if d == 0 || max_abs_entry(cov) == 0.0 {
        return Ok(out);
    }
    let l = CholFactor::new(cov, jitter)?.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(d, count, |_, _| StandardNormal.sample(&mut rng));
    out += (l * z).transpose();
    Ok(out)
}

/// A GP conditioned on data. Immutable once built.
#[derive(Debug, Clone)]
pub struct PosteriorGp {
    pub prior: GpModel,
    rows: Vec<Vec<f64>>,
    /// `T(x_k)` at the training rows for transformed kernels.
    train_proj: ProjectionRows,
    chol: Option<CholFactor>,
    alpha: DVector<f64>,
}

impl PosteriorGp {
    pub fn num_train(&self) -> usize {
        self.rows.len()
    }

    pub fn train_rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `(K + σ²I)⁻¹ (y − μ_X)`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Posterior mean of any process jointly Gaussian with the observations,
    /// given its prior mean (flattened) and its cross-covariance with the
    /// training targets (rows: query, columns: training, output-major).
    pub fn mean_with(&self, prior_mean: &DVector<f64>, cross: &DMatrix<f64>) -> DVector<f64> {
        if self.rows.is_empty() {
            return prior_mean.clone();
        }
        prior_mean + cross * &self.alpha
    }

    /// Posterior covariance counterpart of [`PosteriorGp::mean_with`].
    pub fn cov_with(&self, prior_cov: &DMatrix<f64>, cross: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            None => prior_cov.clone(),
            Some(c) => {
                let v = c.solve_lower(&cross.transpose());
                prior_cov - v.tr_mul(&v)
            }
        }
    }

    /// Posterior variance diagonal only.
    pub fn var_with(&self, prior_var: &DVector<f64>, cross: &DMatrix<f64>) -> DVector<f64> {
        match &self.chol {
            None => prior_var.clone(),
            Some(c) => {
                let v = c.solve_lower(&cross.transpose());
                DVector::from_iterator(
                    prior_var.len(),
                    (0..prior_var.len()).map(|j| prior_var[j] - v.column(j).norm_squared()),
                )
            }
        }
    }

    /// Projections at the training rows (`None` unless the kernel is transformed).
    pub fn train_projections(&self) -> &ProjectionRows {
        &self.train_proj
    }

    fn cross(&self, q: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        match &self.prior.kernel {
            Kernel::Transformed(t) => {
                let tq = Some(projections(&t.config, q)?);
                t.inner.projected_gram(q, &tq, &self.rows, &self.train_proj)
            }
            k => k.gram_rows(q, &self.rows),
        }
    }

    /// Posterior mean at `xq` as an M×n matrix.
    pub fn predict_mean(&self, xq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let q = rows_of(xq);
        let n = self.prior.outputs();
        let mu = flatten(&self.prior.mean.matrix(&q, n)?);
        let m = self.mean_with(&mu, &self.cross(&q)?);
        Ok(unflatten(&m, q.len(), n))
    }

    /// Posterior mean (M×n) and full output-major covariance (nM×nM).
    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let q = rows_of(xq);
        let n = self.prior.outputs();
        let mu = flatten(&self.prior.mean.matrix(&q, n)?);
        let cross = self.cross(&q)?;
        let kqq = self.prior.kernel.gram_rows(&q, &q)?;
        let m = self.mean_with(&mu, &cross);
        Ok((unflatten(&m, q.len(), n), self.cov_with(&kqq, &cross)))
    }

    /// Posterior mean and marginal variances, both M×n.
    pub fn predict_marginal(&self, xq: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let q = rows_of(xq);
        let n = self.prior.outputs();
        let mu = flatten(&self.prior.mean.matrix(&q, n)?);
        let cross = self.cross(&q)?;
        let mut pv = DMatrix::zeros(q.len(), n);
        for (k, r) in q.iter().enumerate() {
            let b = self.prior.kernel.block(r, r)?;
            for i in 0..n {
                pv[(k, i)] = b[(i, i)];
            }
        }
        let m = self.mean_with(&mu, &cross);
        let v = self.var_with(&flatten(&pv), &cross);
        Ok((unflatten(&m, q.len(), n), unflatten(&v, q.len(), n)))
    }

    /// Joint posterior draws at `xq`, one flattened sample per row.
    pub fn sample(&self, xq: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        let (m, cov) = self.predict(xq)?;
        let mut cov = cov;
        crate::numerics::symmetrize(&mut cov);
        sample_mvn(&flatten(&m), &cov, count, seed, self.prior.jitter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::kernel::{ScalarKernel, SquaredExp};
    use rand::Rng;

    fn random_problem(seed: u64, nn: usize, d: usize, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(nn, d, |_, _| rng.random_range(-2.0..2.0));
        let y = DMatrix::from_fn(nn, n, |k, i| (x[(k, 0)] * (i + 1) as f64).sin() + 0.1 * rng.random::<f64>());
        (x, y)
    }

    fn random_params(model: &mut GpModel, rng: &mut ChaCha8Rng) {
        let p: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-1.0..0.5)).collect();
        model.set_params(&p);
    }

    /// Dense Gaussian log-density through an eigendecomposition.
    fn mvn_logpdf_eigen(r: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let e = cov.clone().symmetric_eigen();
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for (j, lam) in e.eigenvalues.iter().enumerate() {
            let proj = e.eigenvectors.column(j).dot(r);
            quad += proj * proj / lam;
            logdet += lam.ln();
        }
        -0.5 * quad - 0.5 * logdet - 0.5 * r.len() as f64 * (2.0 * PI).ln()
    }

    #[test]
    fn single_point_lml() {
        let k = Kernel::Independent(vec![ScalarKernel::SquaredExp(SquaredExp::new(0.75, &[1.0]))]);
        let m = GpModel::new(k, 0.25);
        let x = DMatrix::from_element(1, 1, 0.3);
        let y = DMatrix::zeros(1, 1);
        let v = m.log_marginal_likelihood(&x, &y).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn lml_decreases_with_residual() {
        let m = GpModel::new(Kernel::independent_se(1, 1), 0.1);
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let mut last = f64::INFINITY;
        for s in [0.0, 0.5, 1.0, 2.0] {
            let y = DMatrix::from_column_slice(2, 1, &[s, -s]);
            let v = m.log_marginal_likelihood(&x, &y).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn lml_matches_dense_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for seed in 0..20 {
            let (x, y) = random_problem(seed, 7, 2, 2);
            for kernel in [Kernel::independent_se(2, 2), Kernel::lmc(2, 2, 1)] {
                let mut m = GpModel::new(kernel, 0.1);
                random_params(&mut m, &mut rng);
                let rows = rows_of(&x);
                let cov = m.noisy_gram(&rows).unwrap();
                let oracle = mvn_logpdf_eigen(&flatten(&y), &cov);
                let v = m.log_marginal_likelihood(&x, &y).unwrap();
                assert!((v - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "{v} vs {oracle}");
            }
        }
    }

    #[test]
    fn interpolates_training_points_without_noise() {
        let (x, y) = random_problem(3, 6, 2, 2);
        let mut m = GpModel::new(Kernel::independent_se(2, 2), 1e-12);
        m.jitter = JitterPolicy::none();
        let post = m.condition(&x, &y).unwrap();
        let pred = post.predict_mean(&x).unwrap();
        assert!((pred - y).amax() < 1e-6);
    }

    #[test]
    fn empty_data_gives_prior() {
        let m = GpModel::new(Kernel::lmc(2, 1, 1), 0.1);
        let x = DMatrix::zeros(0, 1);
        let y = DMatrix::zeros(0, 2);
        let post = m.condition(&x, &y).unwrap();
        let xq = DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 1.0]);
        let (mean, cov) = post.predict(&xq).unwrap();
        assert_eq!(mean.amax(), 0.0);
        let prior = m.kernel.gram(&xq, &xq).unwrap();
        assert!((cov - prior).amax() < 1e-15);
    }

    #[test]
    fn posterior_variance_never_exceeds_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let (x, y) = random_problem(seed, 8, 2, 2);
            let mut m = GpModel::new(Kernel::lmc(2, 2, 1), 0.1);
            random_params(&mut m, &mut rng);
            let post = m.condition(&x, &y).unwrap();
            let (xq, _) = random_problem(seed + 100, 5, 2, 2);
            let (_, cov) = post.predict(&xq).unwrap();
            let prior = m.kernel.gram(&xq, &xq).unwrap();
            for j in 0..cov.nrows() {
                assert!(cov[(j, j)] <= prior[(j, j)] + 1e-10);
            }
            let (_, var) = post.predict_marginal(&xq).unwrap();
            for j in 0..cov.nrows() {
                assert!((flatten(&var)[j] - cov[(j, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sequential_conditioning_matches_joint() {
        let (x, y) = random_problem(8, 10, 1, 1);
        let m = GpModel::new(Kernel::independent_se(1, 1), 0.05);
        let xq = DMatrix::from_column_slice(4, 1, &[-1.5, -0.2, 0.7, 1.9]);
        let joint = m.condition(&x, &y).unwrap().predict_mean(&xq).unwrap();

        // Posterior after the first half becomes the prior for the second.
        let (x1, y1) = (x.rows(0, 5).into_owned(), y.rows(0, 5).into_owned());
        let (x2, y2) = (x.rows(5, 5).into_owned(), y.rows(5, 5).into_owned());
        let first = m.condition(&x1, &y1).unwrap();
        let (m2, c2) = first.predict(&x2).unwrap();
        let cross_q2 = {
            let rows_q = rows_of(&xq);
            let kq2 = m.kernel.gram_rows(&rows_q, &rows_of(&x2)).unwrap();
            let kq1 = m.kernel.gram_rows(&rows_q, &rows_of(&x1)).unwrap();
            let k21 = m.kernel.gram_rows(&rows_of(&x2), &rows_of(&x1)).unwrap();
            let k11 = m.noisy_gram(&rows_of(&x1)).unwrap();
            kq2 - kq1 * k11.cholesky().unwrap().solve(&k21.transpose())
        };
        let mut s = c2;
        for d in 0..5 {
            s[(d, d)] += 0.05;
        }
        let mq1 = first.predict_mean(&xq).unwrap();
        let seq = flatten(&mq1) + &cross_q2 * s.cholesky().unwrap().solve(&(flatten(&y2) - flatten(&m2)));
        assert!((seq - flatten(&joint)).amax() < 1e-8);
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kernel in [Kernel::independent_se(2, 2), Kernel::icm(2, 2, 1), Kernel::lmc(2, 2, 1)] {
            let (x, y) = random_problem(1, 9, 2, 2);
            let mut m = GpModel::new(kernel, 0.1);
            random_params(&mut m, &mut rng);
            let (_, g) = m.lml_with_grad(&x, &y).unwrap();
            let p0 = m.params();
            for j in 0..p0.len() {
                let h = 1e-5;
                let mut pp = p0.clone();
                pp[j] += h;
                m.set_params(&pp);
                let up = m.log_marginal_likelihood(&x, &y).unwrap();
                pp[j] -= 2.0 * h;
                m.set_params(&pp);
                let dn = m.log_marginal_likelihood(&x, &y).unwrap();
                m.set_params(&p0);
                let fd = (up - dn) / (2.0 * h);
                assert!((g[j] - fd).abs() <= 1e-4 * (1.0 + fd.abs()), "param {j}: {} vs {fd}", g[j]);
            }
        }
    }

    #[test]
    fn sampling_is_seeded_and_zero_cov_is_exact() {
        let mean = DVector::from_column_slice(&[1.0, -2.0]);
        let z = sample_mvn(&mean, &DMatrix::zeros(2, 2), 3, 1, JitterPolicy::default()).unwrap();
        for s in 0..3 {
            assert_eq!(z.row(s).transpose(), mean);
        }
        let m = GpModel::new(Kernel::independent_se(1, 1), 0.1);
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 0.4, 0.8]);
        assert_eq!(m.sample_prior(&x, 4, 9).unwrap(), m.sample_prior(&x, 4, 9).unwrap());
        assert_ne!(m.sample_prior(&x, 4, 9).unwrap(), m.sample_prior(&x, 4, 10).unwrap());
    }

    #[test]
    fn sample_mean_converges() {
        let mean = DVector::from_column_slice(&[0.5, -1.0, 2.0]);
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let count = 100_000;
        let s = sample_mvn(&mean, &cov, count, 42, JitterPolicy::default()).unwrap();
        for j in 0..3 {
            let m: f64 = s.column(j).mean();
            let tol = 3.0 * cov[(j, j)].sqrt() / (count as f64).sqrt();
            assert!((m - mean[j]).abs() < tol, "component {j}");
        }
    }
}
