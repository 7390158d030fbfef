//! GP prior on `ā` pushed through the constrained-acceleration map
//! `q̈ = L(x) b(x) + T(x) ā(x)`.
//!
//! The induced process has mean `L b + T μ_ā` and covariance
//! `T(x) K_ā(x, x') T(x')ᵀ`, so its posterior mean and samples satisfy
//! `A q̈ = b` at every input. The joint Gaussian of `ā` and `q̈` gives
//! inference of `ā` from constrained observations and prediction under a
//! second constraint configuration sharing `ā` and `M`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::kernel::{projections, rows_of, Kernel, ParamKind};
use crate::gp::model::{flatten, sample_mvn, unflatten, GpModel, Mean, PosteriorGp};
use crate::mechanics::Configuration;
use crate::numerics::{symmetrize, JitterPolicy};
use crate::systems::BenchmarkSystem;

/// Prior mean of `ā`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    Zero,
    Parametric,
}

/// Relative step of the central differences used for θ_p gradients.
pub const THETA_FD_STEP: f64 = 1e-6;

/// `μ_ā` for a system: zero, or the parametric acceleration at `theta`.
pub fn gp2_mu_abar(mode: MeanMode, sys: &BenchmarkSystem, theta: &[f64]) -> Mean {
    match mode {
        MeanMode::Zero => Mean::Zero,
        MeanMode::Parametric => {
            let sys = sys.clone();
            let theta = theta.to_vec();
            Mean::function(move |row| Ok(sys.parametric_mean(row, &theta)))
        }
    }
}

/// The transformed prior over `q̈` induced by a prior over `ā`.
pub fn gp2_prior(abar: &GpModel, config: Configuration) -> Result<GpModel> {
    if let Kernel::Transformed(_) = abar.kernel {
        return Err(Error::Domain("prior over ā must not already be transformed".into()));
    }
    let n = abar.outputs();
    if config.layout.n != n {
        return Err(Error::Shape(format!(
            "configuration has {} degrees of freedom, prior has {n} outputs",
            config.layout.n
        )));
    }
    let mean = {
        let abar_mean = abar.mean.clone();
        let config = config.clone();
        Mean::function(move |row| {
            let (lb, t) = config.project_row(row)?;
            Ok(lb + t * abar_mean.eval(row, n)?)
        })
    };
    Ok(GpModel {
        mean,
        kernel: Kernel::transformed(abar.kernel.clone(), config),
        log_noise: abar.log_noise.clone(),
        jitter: abar.jitter,
    })
}

/// GP² model over a benchmark system.
#[derive(Debug, Clone)]
pub struct Gp2Model {
    pub system: BenchmarkSystem,
    /// Kernel over `ā`; independent SE-ARD per component by default.
    pub abar_kernel: Kernel,
    pub log_noise: Vec<f64>,
    pub mean_mode: MeanMode,
    /// Full θ_p vector used for `L`, `T` and the parametric mean.
    pub theta: Vec<f64>,
    /// Indices of `theta` exposed as trainable hyperparameters.
    pub trainable: Vec<usize>,
    pub jitter: JitterPolicy,
}

impl Gp2Model {
    /// Starts at θ_p = θ_p*. With `estimate_theta`, the parameters that can
    /// influence the likelihood for this mean mode become trainable.
    pub fn new(system: BenchmarkSystem, mean_mode: MeanMode, estimate_theta: bool) -> Self {
        let n = system.dof();
        let d = system.input_dim();
        let trainable = if estimate_theta {
            system.trainable_params(mean_mode == MeanMode::Parametric)
        } else {
            vec![]
        };
        Self {
            abar_kernel: Kernel::independent_se(n, d),
            log_noise: vec![(1e-4f64).ln(); n],
            mean_mode,
            theta: system.theta_star.clone(),
            trainable,
            jitter: JitterPolicy::default(),
            system,
        }
    }

    pub fn outputs(&self) -> usize {
        self.system.dof()
    }

    pub fn configuration(&self) -> Configuration {
        self.system.configuration_with(self.theta.clone())
    }

    pub fn abar_prior(&self) -> GpModel {
        GpModel {
            mean: gp2_mu_abar(self.mean_mode, &self.system, &self.theta),
            kernel: self.abar_kernel.clone(),
            log_noise: self.log_noise.clone(),
            jitter: self.jitter,
        }
    }

    pub fn prior(&self) -> Result<GpModel> {
        gp2_prior(&self.abar_prior(), self.configuration())
    }

    fn gp_param_count(&self) -> usize {
        self.abar_kernel.num_params() + self.log_noise.len()
    }

    /// Kernel hyperparameters, log noise variances, then trainable θ_p.
    pub fn num_params(&self) -> usize {
        self.gp_param_count() + self.trainable.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.abar_kernel.params();
        p.extend(&self.log_noise);
        p.extend(self.trainable.iter().map(|&i| self.theta[i]));
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "GP² parameter length");
        let k = self.abar_kernel.num_params();
        self.abar_kernel.set_params(&p[..k]);
        let g = self.gp_param_count();
        self.log_noise.copy_from_slice(&p[k..g]);
        for (j, &i) in self.trainable.iter().enumerate() {
            self.theta[i] = p[g + j];
        }
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut v = self.abar_kernel.param_kinds();
        v.extend((0..self.log_noise.len()).map(|output| ParamKind::LogNoise { output }));
        v.extend(self.trainable.iter().map(|&index| ParamKind::Theta { index }));
        v
    }

    pub fn log_marginal_likelihood(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        self.prior()?.log_marginal_likelihood(x, y)
    }

    /// LML and gradient over [`Gp2Model::params`]. Kernel and noise entries
    /// are analytic. θ_p entries chain the analytic weights through central
    /// differences of the per-row mean and `T(x)`, with step
    /// `THETA_FD_STEP · (1 + |θ|)`.
    pub fn lml_with_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
        self.lml_with_grad_step(x, y, THETA_FD_STEP)
    }

    pub fn lml_with_grad_step(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        rel_step: f64,
    ) -> Result<(f64, Vec<f64>)> {
        if self.trainable.is_empty() || x.nrows() == 0 {
            let (v, mut g) = self.prior()?.lml_with_grad(x, y)?;
            g.resize(self.num_params(), 0.0);
            return Ok((v, g));
        }
        let terms = self.prior()?.lml_terms(x, y)?;
        let mut g = terms.grad;
        let rows = rows_of(x);
        let n = self.outputs();
        let t0 = Some(projections(&self.configuration(), &rows)?);
        for &i in &self.trainable {
            // dLML/dθ = αᵀ ∂m + tr(W ∂K), with ∂K = ∂T G Tᵀ + T G ∂Tᵀ.
            let h = rel_step * (1.0 + self.theta[i].abs());
            let at = |th: f64| -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
                let mut m = self.clone();
                m.theta[i] = th;
                let prior = m.prior()?;
                Ok((prior.mean.matrix(&rows, n)?, projections(&m.configuration(), &rows)?))
            };
            let (m_up, t_up) = at(self.theta[i] + h)?;
            let (m_dn, t_dn) = at(self.theta[i] - h)?;
            let dm = flatten(&((m_up - m_dn) / (2.0 * h)));
            let dt: Vec<DMatrix<f64>> = t_up.iter().zip(&t_dn).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let p = self.abar_kernel.projected_gram(&rows, &Some(dt), &rows, &t0)?;
            let gi = terms.alpha.dot(&dm) + 2.0 * terms.w.dot(&p);
            if !gi.is_finite() {
                return Err(Error::NonFinite("θ_p gradient"));
            }
            g.push(gi);
        }
        Ok((terms.value, g))
    }

    pub fn condition(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Gp2Posterior> {
        Ok(Gp2Posterior {
            model: self.clone(),
            post: self.prior()?.condition(x, y)?,
        })
    }
}

/// Posterior of a GP² model. Predictions of `q̈` come from the underlying
/// [`PosteriorGp`]; `ā` and transfer predictions reuse its factorization.
#[derive(Debug, Clone)]
pub struct Gp2Posterior {
    pub model: Gp2Model,
    pub post: PosteriorGp,
}

/// Mean (M×n) and marginal variances (M×n) at query points.
#[derive(Debug, Clone)]
pub struct MarginalPrediction {
    pub mean: DMatrix<f64>,
    pub var: DMatrix<f64>,
}

impl Gp2Posterior {
    pub fn predict_mean(&self, xq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.post.predict_mean(xq)
    }

    pub fn predict_marginal(&self, xq: &DMatrix<f64>) -> Result<MarginalPrediction> {
        let (mean, var) = self.post.predict_marginal(xq)?;
        Ok(MarginalPrediction { mean, var })
    }

    fn abar_cross(&self, q: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.model
            .abar_kernel
            .projected_gram(q, &None, self.post.train_rows(), self.post.train_projections())
    }

    /// Posterior of `ā` at `xq`: mean (M×n) and output-major covariance.
    pub fn infer_abar(&self, xq: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        joint_infer_abar(self, xq)
    }

    /// Posterior of `ā` at `xq` with marginal variances only.
    pub fn infer_abar_marginal(&self, xq: &DMatrix<f64>) -> Result<MarginalPrediction> {
        let q = rows_of(xq);
        let n = self.model.outputs();
        let prior = self.model.abar_prior();
        let mu = flatten(&prior.mean.matrix(&q, n)?);
        let cross = self.abar_cross(&q)?;
        let mut pv = DMatrix::zeros(q.len(), n);
        for (k, r) in q.iter().enumerate() {
            let b = self.model.abar_kernel.block(r, r)?;
            for i in 0..n {
                pv[(k, i)] = b[(i, i)];
            }
        }
        let mean = self.post.mean_with(&mu, &cross);
        let var = self.post.var_with(&flatten(&pv), &cross);
        Ok(MarginalPrediction {
            mean: unflatten(&mean, q.len(), n),
            var: unflatten(&var, q.len(), n),
        })
    }

    /// Posterior samples of `q̈` at `xq`, one flattened (output-major) sample
    /// per row. Samples of `ā` are pushed through `L b + T ā` so each one
    /// satisfies the constraining equation up to roundoff.
    pub fn sample(&self, xq: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        let q = rows_of(xq);
        let n = self.model.outputs();
        let m = q.len();
        let (mean, mut cov) = self.infer_abar(xq)?;
        symmetrize(&mut cov);
        let abar = sample_mvn(&flatten(&mean), &cov, count, seed, self.model.jitter)?;
        let config = self.model.configuration();
        let ops: Vec<(DVector<f64>, DMatrix<f64>)> =
            q.iter().map(|r| config.project_row(r)).collect::<Result<_>>()?;
        let mut out = DMatrix::zeros(count, n * m);
        let mut a = DVector::zeros(n);
        for s in 0..count {
            for (k, (lb, t)) in ops.iter().enumerate() {
                for i in 0..n {
                    a[i] = abar[(s, i * m + k)];
                }
                let h = lb + t * &a;
                for i in 0..n {
                    out[(s, i * m + k)] = h[i];
                }
            }
        }
        Ok(out)
    }

    /// Predictions of `q̈'` under another constraint configuration that shares
    /// `ā` and `M` with the training system.
    pub fn transfer(&self, target: &Configuration, xq: &DMatrix<f64>) -> Result<MarginalPrediction> {
        transfer_predict(self, target, xq)
    }
}

/// Posterior of `ā` given constrained observations, through the
/// cross-covariance `K_ā(x, X) T(X)ᵀ`.
pub fn joint_infer_abar(
    posterior: &Gp2Posterior,
    xq: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let q = rows_of(xq);
    let n = posterior.model.outputs();
    let prior = posterior.model.abar_prior();
    let mu = flatten(&prior.mean.matrix(&q, n)?);
    let kqq = posterior.model.abar_kernel.gram_rows(&q, &q)?;
    let cross = posterior.abar_cross(&q)?;
    let mean = posterior.post.mean_with(&mu, &cross);
    Ok((unflatten(&mean, q.len(), n), posterior.post.cov_with(&kqq, &cross)))
}

/// Prediction under a target configuration via the cross-covariance
/// `T'(x) K_ā(x, X) T(X)ᵀ`.
pub fn transfer_predict(
    posterior: &Gp2Posterior,
    target: &Configuration,
    xq: &DMatrix<f64>,
) -> Result<MarginalPrediction> {
    let q = rows_of(xq);
    let n = posterior.model.outputs();
    if target.layout != posterior.model.system.layout {
        return Err(Error::Shape("transfer target has a different input layout".into()));
    }
    let abar = posterior.model.abar_prior();
    let kernel = &posterior.model.abar_kernel;
    let tq = projections(target, &q)?;
    let mut mu = DMatrix::zeros(q.len(), n);
    let mut pv = DMatrix::zeros(q.len(), n);
    for (k, r) in q.iter().enumerate() {
        let (lb, t) = target.project_row(r)?;
        let m = lb + &t * abar.mean.eval(r, n)?;
        let c = &t * kernel.block(r, r)? * t.transpose();
        for i in 0..n {
            mu[(k, i)] = m[i];
            pv[(k, i)] = c[(i, i)];
        }
    }
    let cross = kernel.projected_gram(
        &q,
        &Some(tq),
        posterior.post.train_rows(),
        posterior.post.train_projections(),
    )?;
    let mean = posterior.post.mean_with(&flatten(&mu), &cross);
    let var = posterior.post.var_with(&flatten(&pv), &cross);
    Ok(MarginalPrediction {
        mean: unflatten(&mean, q.len(), n),
        var: unflatten(&var, q.len(), n),
    })
}
