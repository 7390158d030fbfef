//! Covariance functions.
//!
//! Scalar kernels (`SE`, `Linear`, `Bias`) are combined into multi-output
//! kernels `K(x, x') ∈ R^{n×n}`. Gram matrices over `N` and `M` inputs are
//! flattened output-major: entry `(i·N + k, j·M + l)` holds `K(x_k, x_l)[i, j]`.
//!
//! All positive hyperparameters are stored as natural logarithms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mechanics::Configuration;

/// Input rows of a design matrix as owned contiguous vectors.
pub fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|k| x.row(k).iter().copied().collect())
        .collect()
}

/// What a hyperparameter means; drives initialization and bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    /// Log signal variance of output `output` (or all outputs when `None`).
    LogVariance { output: Option<usize> },
    LogLengthscale { dim: usize },
    LogLinearVariance { dim: usize },
    /// Entry of a coregionalization factor `W`.
    CoregionWeight,
    LogKappa,
    LogNoise { output: usize },
    /// Entry of the physical parameter vector θ_p.
    Theta { index: usize },
}

/// Squared exponential with one length-scale per input dimension:
/// `σ² exp(−½ Σ_d (x_d − x'_d)² / ℓ_d²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredExp {
    pub log_variance: f64,
    pub log_lengthscales: Vec<f64>,
    /// When set, the variance is pinned to `exp(log_variance)` and not trained.
    pub fixed_variance: bool,
}

impl SquaredExp {
    pub fn new(variance: f64, lengthscales: &[f64]) -> Self {
        Self {
            log_variance: variance.ln(),
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            fixed_variance: false,
        }
    }

    /// Unit-variance SE for use inside a coregionalized sum.
    pub fn unit(dim: usize) -> Self {
        Self {
            log_variance: 0.0,
            log_lengthscales: vec![0.0; dim],
            fixed_variance: true,
        }
    }
}

/// `Σ_d v_d x_d x'_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearKernel {
    pub log_variances: Vec<f64>,
}

/// Constant covariance `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasKernel {
    pub log_variance: f64,
    pub fixed_variance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarKernel {
    SquaredExp(SquaredExp),
    Linear(LinearKernel),
    Bias(BiasKernel),
}

impl ScalarKernel {
    pub fn num_params(&self) -> usize {
        match self {
            Self::SquaredExp(k) => k.log_lengthscales.len() + usize::from(!k.fixed_variance),
            Self::Linear(k) => k.log_variances.len(),
            Self::Bias(k) => usize::from(!k.fixed_variance),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Self::SquaredExp(k) => {
                let mut p = Vec::with_capacity(self.num_params());
                if !k.fixed_variance {
                    p.push(k.log_variance);
                }
                p.extend(&k.log_lengthscales);
                p
            }
            Self::Linear(k) => k.log_variances.clone(),
            Self::Bias(k) => {
                if k.fixed_variance {
                    vec![]
                } else {
                    vec![k.log_variance]
                }
            }
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.num_params());
        match self {
            Self::SquaredExp(k) => {
                let off = if k.fixed_variance {
                    0
                } else {
                    k.log_variance = p[0];
                    1
                };
                k.log_lengthscales.copy_from_slice(&p[off..]);
            }
            Self::Linear(k) => k.log_variances.copy_from_slice(p),
            Self::Bias(k) => {
                if !k.fixed_variance {
                    k.log_variance = p[0];
                }
            }
        }
    }

    pub fn param_kinds(&self, output: Option<usize>) -> Vec<ParamKind> {
        match self {
            Self::SquaredExp(k) => {
                let mut v = Vec::new();
                if !k.fixed_variance {
                    v.push(ParamKind::LogVariance { output });
                }
                v.extend((0..k.log_lengthscales.len()).map(|dim| ParamKind::LogLengthscale { dim }));
                v
            }
            Self::Linear(k) => (0..k.log_variances.len())
                .map(|dim| ParamKind::LogLinearVariance { dim })
                .collect(),
            Self::Bias(k) => {
                if k.fixed_variance {
                    vec![]
                } else {
                    vec![ParamKind::LogVariance { output }]
                }
            }
        }
    }

    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> f64 {
        match self {
            Self::SquaredExp(k) => {
                let mut s = 0.0;
                for ((a, b), ll) in x1.iter().zip(x2).zip(&k.log_lengthscales) {
                    let r = (a - b) * (-ll).exp();
                    s += r * r;
                }
                k.log_variance.exp() * (-0.5 * s).exp()
            }
            Self::Linear(k) => x1
                .iter()
                .zip(x2)
                .zip(&k.log_variances)
                .map(|((a, b), lv)| lv.exp() * a * b)
                .sum(),
            Self::Bias(k) => k.log_variance.exp(),
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        let (ok, what) = match self {
            Self::SquaredExp(k) => (
                k.log_lengthscales.len() == dim
                    && k.log_variance.is_finite()
                    && k.log_lengthscales.iter().all(|v| v.is_finite()),
                "SE",
            ),
            Self::Linear(k) => (
                k.log_variances.len() == dim && k.log_variances.iter().all(|v| v.is_finite()),
                "linear",
            ),
            Self::Bias(k) => (k.log_variance.is_finite(), "bias"),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "invalid {what} kernel hyperparameters for input dimension {dim}"
            )))
        }
    }

    /// Scalar Gram matrix `k(X1, X2)`.
    pub fn gram(&self, x1: &[Vec<f64>], x2: &[Vec<f64>]) -> DMatrix<f64> {
        match self {
            Self::SquaredExp(k) => {
                let inv_l: Vec<f64> = k.log_lengthscales.iter().map(|l| (-l).exp()).collect();
                let scale = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
                    x.iter().map(|r| r.iter().zip(&inv_l).map(|(a, s)| a * s).collect()).collect()
                };
                let (s1, s2) = (scale(x1), scale(x2));
                let var = k.log_variance.exp();
                DMatrix::from_fn(x1.len(), x2.len(), |a, b| {
                    let d2: f64 = s1[a].iter().zip(&s2[b]).map(|(p, q)| (p - q) * (p - q)).sum();
                    var * (-0.5 * d2).exp()
                })
            }
            _ => DMatrix::from_fn(x1.len(), x2.len(), |k, l| self.eval(&x1[k], &x2[l])),
        }
    }

    /// `Σ_{k,l} W_{kl} ∂k(x_k, x_l)/∂θ_j` for every free parameter `θ_j`.
    pub fn grad_trace(&self, x: &[Vec<f64>], w: &DMatrix<f64>) -> Vec<f64> {
        let n = x.len();
        match self {
            Self::SquaredExp(k) => {
                let dim = k.log_lengthscales.len();
                let inv_l: Vec<f64> = k.log_lengthscales.iter().map(|l| (-l).exp()).collect();
                let xs: Vec<Vec<f64>> =
                    x.iter().map(|r| r.iter().zip(&inv_l).map(|(a, s)| a * s).collect()).collect();
                let var = k.log_variance.exp();
                let mut g_var = 0.0;
                let mut g_len = vec![0.0; dim];
                let mut r2 = vec![0.0; dim];
                // The kernel is symmetric, so (a, b) and (b, a) share a derivative.
                for a in 0..n {
                    g_var += w[(a, a)] * var;
                    for b in (a + 1)..n {
                        let wab = w[(a, b)] + w[(b, a)];
                        if wab == 0.0 {
                            continue;
                        }
                        let mut s = 0.0;
                        for d in 0..dim {
                            let diff = xs[a][d] - xs[b][d];
                            r2[d] = diff * diff;
                            s += r2[d];
                        }
                        let kv = wab * var * (-0.5 * s).exp();
                        g_var += kv;
                        for d in 0..dim {
                            g_len[d] += kv * r2[d];
                        }
                    }
                }
                let mut out = Vec::with_capacity(self.num_params());
                if !k.fixed_variance {
                    out.push(g_var);
                }
                out.extend(g_len);
                out
            }
            Self::Linear(k) => {
                let dim = k.log_variances.len();
                let mut g = vec![0.0; dim];
                for a in 0..n {
                    for b in 0..n {
                        let wab = w[(a, b)];
                        for d in 0..dim {
                            g[d] += wab * x[a][d] * x[b][d];
                        }
                    }
                }
                for (gd, lv) in g.iter_mut().zip(&k.log_variances) {
                    *gd *= lv.exp();
                }
                g
            }
            Self::Bias(k) => {
                if k.fixed_variance {
                    vec![]
                } else {
                    vec![w.sum() * k.log_variance.exp()]
                }
            }
        }
    }
}

/// One `B k(x, x')` term with `B = W Wᵀ + κ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoregionTerm {
    pub w: DMatrix<f64>,
    pub log_kappa: f64,
    pub kernel: ScalarKernel,
}

impl CoregionTerm {
    pub fn new(outputs: usize, rank: usize, kernel: ScalarKernel) -> Self {
        Self {
            w: DMatrix::zeros(outputs, rank),
            log_kappa: 0.0,
            kernel,
        }
    }

    pub fn coregion_matrix(&self) -> DMatrix<f64> {
        let n = self.w.nrows();
        &self.w * self.w.transpose() + DMatrix::identity(n, n) * self.log_kappa.exp()
    }

    fn num_params(&self) -> usize {
        self.w.len() + 1 + self.kernel.num_params()
    }
}

/// Multi-output covariance function.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// One scalar kernel per output; outputs are independent.
    Independent(Vec<ScalarKernel>),
    /// `Σ_i B_i k_i(x, x')` (ICM with one term, LMC with several).
    Coregionalized(Vec<CoregionTerm>),
    /// `T(x) K(x, x') T(x')ᵀ` with `T` from a constraint configuration.
    Transformed(TransformedKernel),
}

/// An inner kernel pushed through the projection `T` of a configuration.
#[derive(Debug, Clone)]
pub struct TransformedKernel {
    pub inner: Box<Kernel>,
    pub config: Configuration,
}

/// Precomputed `T(x_k)` for a set of rows; `None` stands for the identity.
pub type ProjectionRows = Option<Vec<DMatrix<f64>>>;

/// `T(x)` at every row of `x`.
pub fn projections(config: &Configuration, x: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
    x.iter().map(|r| config.project_row(r).map(|(_, t)| t)).collect()
}

impl Kernel {
    /// `n` independent SE-ARD kernels.
    pub fn independent_se(outputs: usize, dim: usize) -> Self {
        Self::Independent(
            (0..outputs)
                .map(|_| ScalarKernel::SquaredExp(SquaredExp::new(1.0, &vec![1.0; dim])))
                .collect(),
        )
    }

    /// `B k_SE` with unit-variance SE.
    pub fn icm(outputs: usize, dim: usize, rank: usize) -> Self {
        Self::Coregionalized(vec![CoregionTerm::new(
            outputs,
            rank,
            ScalarKernel::SquaredExp(SquaredExp::unit(dim)),
        )])
    }

    /// `B1 k_SE + B2 k_bias + B3 k_linear`.
    pub fn lmc(outputs: usize, dim: usize, rank: usize) -> Self {
        Self::Coregionalized(vec![
            CoregionTerm::new(outputs, rank, ScalarKernel::SquaredExp(SquaredExp::unit(dim))),
            CoregionTerm::new(
                outputs,
                rank,
                ScalarKernel::Bias(BiasKernel {
                    log_variance: 0.0,
                    fixed_variance: true,
                }),
            ),
            CoregionTerm::new(
                outputs,
                rank,
                ScalarKernel::Linear(LinearKernel {
                    log_variances: vec![0.0; dim],
                }),
            ),
        ])
    }

    pub fn transformed(inner: Kernel, config: Configuration) -> Self {
        Self::Transformed(TransformedKernel {
            inner: Box::new(inner),
            config,
        })
    }

    pub fn outputs(&self) -> usize {
        match self {
            Self::Independent(ks) => ks.len(),
            Self::Coregionalized(terms) => terms.first().map_or(0, |t| t.w.nrows()),
            Self::Transformed(t) => t.inner.outputs(),
        }
    }

    pub fn is_independent(&self) -> bool {
        matches!(self, Self::Independent(_))
    }

    pub fn num_params(&self) -> usize {
        match self {
            Self::Independent(ks) => ks.iter().map(ScalarKernel::num_params).sum(),
            Self::Coregionalized(terms) => terms.iter().map(CoregionTerm::num_params).sum(),
            Self::Transformed(t) => t.inner.num_params(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Self::Independent(ks) => ks.iter().flat_map(ScalarKernel::params).collect(),
            Self::Coregionalized(terms) => terms
                .iter()
                .flat_map(|t| {
                    let mut p: Vec<f64> = t.w.iter().copied().collect();
                    p.push(t.log_kappa);
                    p.extend(t.kernel.params());
                    p
                })
                .collect(),
            Self::Transformed(t) => t.inner.params(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "kernel parameter length");
        match self {
            Self::Independent(ks) => {
                let mut off = 0;
                for k in ks {
                    let m = k.num_params();
                    k.set_params(&p[off..off + m]);
                    off += m;
                }
            }
            Self::Coregionalized(terms) => {
                let mut off = 0;
                for t in terms {
                    let nw = t.w.len();
                    t.w.as_mut_slice().copy_from_slice(&p[off..off + nw]);
                    off += nw;
                    t.log_kappa = p[off];
                    off += 1;
                    let m = t.kernel.num_params();
                    t.kernel.set_params(&p[off..off + m]);
                    off += m;
                }
            }
            Self::Transformed(t) => t.inner.set_params(p),
        }
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        match self {
            Self::Independent(ks) => ks
                .iter()
                .enumerate()
                .flat_map(|(i, k)| k.param_kinds(Some(i)))
                .collect(),
            Self::Coregionalized(terms) => terms
                .iter()
                .flat_map(|t| {
                    let mut v = vec![ParamKind::CoregionWeight; t.w.len()];
                    v.push(ParamKind::LogKappa);
                    v.extend(t.kernel.param_kinds(None));
                    v
                })
                .collect(),
            Self::Transformed(t) => t.inner.param_kinds(),
        }
    }

    /// Checks hyperparameters against an input dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Independent(ks) => ks.iter().try_for_each(|k| k.check(dim)),
            Self::Coregionalized(terms) => terms.iter().try_for_each(|t| {
                if !t.log_kappa.is_finite() || t.w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain("invalid coregionalization parameters".into()));
                }
                t.kernel.check(dim)
            }),
            Self::Transformed(t) => t.inner.validate(dim),
        }
    }

    /// Covariance block `K(x1, x2)` (n×n) for a single pair of inputs.
    pub fn block(&self, x1: &[f64], x2: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Self::Independent(ks) => Ok(DMatrix::from_diagonal(&DVector::from_iterator(
                ks.len(),
                ks.iter().map(|k| k.eval(x1, x2)),
            ))),
            Self::Coregionalized(terms) => {
                let n = self.outputs();
                let mut out = DMatrix::zeros(n, n);
                for t in terms {
                    out += t.coregion_matrix() * t.kernel.eval(x1, x2);
                }
                Ok(out)
            }
            Self::Transformed(t) => {
                let (_, t1) = t.config.project_row(x1)?;
                let (_, t2) = t.config.project_row(x2)?;
                Ok(&t1 * t.inner.block(x1, x2)? * t2.transpose())
            }
        }
    }

    /// Output-major Gram matrix between two input sets.
    pub fn gram(&self, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.gram_rows(&rows_of(x1), &rows_of(x2))
    }

    pub fn gram_rows(&self, x1: &[Vec<f64>], x2: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        match self {
            Self::Transformed(t) => {
                let p1 = Some(projections(&t.config, x1)?);
                let p2 = Some(projections(&t.config, x2)?);
                t.inner.projected_gram(x1, &p1, x2, &p2)
            }
            _ => self.projected_gram(x1, &None, x2, &None),
        }
    }

    /// `T1 K(X1, X2) T2ᵀ` with per-row projections (identity when `None`).
    /// `self` must not itself be `Transformed`.
    pub fn projected_gram(
        &self,
        x1: &[Vec<f64>],
        t1: &ProjectionRows,
        x2: &[Vec<f64>],
        t2: &ProjectionRows,
    ) -> Result<DMatrix<f64>> {
        let n = self.outputs();
        let (n1, n2) = (x1.len(), x2.len());
        let mut out = DMatrix::zeros(n * n1, n * n2);
        match (self, t1, t2) {
            (Self::Transformed(_), _, _) => {
                return Err(Error::Domain("nested transformed kernels are not supported".into()))
            }
            (Self::Independent(ks), None, None) => {
                for (i, k) in ks.iter().enumerate() {
                    let g = k.gram(x1, x2);
                    out.view_mut((i * n1, i * n2), (n1, n2)).copy_from(&g);
                }
            }
            (Self::Coregionalized(terms), None, None) => {
                for t in terms {
                    let b = t.coregion_matrix();
                    let g = t.kernel.gram(x1, x2);
                    for i in 0..n {
                        for j in 0..n {
                            let mut v = out.view_mut((i * n1, j * n2), (n1, n2));
                            v += &g * b[(i, j)];
                        }
                    }
                }
            }
            _ => {
                let grams = self.scalar_grams(x1, x2);
                // Row-major copies of the projections; identity when absent.
                let flat = |ts: &ProjectionRows, count: usize| -> Vec<f64> {
                    let mut v = vec![0.0; count * n * n];
                    for k in 0..count {
                        for i in 0..n {
                            for m in 0..n {
                                v[k * n * n + i * n + m] = match ts {
                                    Some(t) => t[k][(i, m)],
                                    None => f64::from(u8::from(i == m)),
                                };
                            }
                        }
                    }
                    v
                };
                let (f1, f2) = (flat(t1, n1), flat(t2, n2));
                let mut kb = vec![0.0; n * n];
                let mut left = vec![0.0; n * n];
                for l in 0..n2 {
                    let b2 = &f2[l * n * n..(l + 1) * n * n];
                    for k in 0..n1 {
                        let b1 = &f1[k * n * n..(k + 1) * n * n];
                        self.fill_block(&grams, k, l, &mut kb);
                        // left = T1 K, then T1 K T2ᵀ
                        for i in 0..n {
                            for j in 0..n {
                                let mut acc = 0.0;
                                for m in 0..n {
                                    acc += b1[i * n + m] * kb[m * n + j];
                                }
                                left[i * n + j] = acc;
                            }
                        }
                        for j in 0..n {
                            for i in 0..n {
                                let mut acc = 0.0;
                                for m in 0..n {
                                    acc += left[i * n + m] * b2[j * n + m];
                                }
                                out[(i * n1 + k, j * n2 + l)] = acc;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Scalar Gram matrices, one per independent output or coregion term.
    fn scalar_grams(&self, x1: &[Vec<f64>], x2: &[Vec<f64>]) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            Self::Independent(ks) => ks
                .iter()
                .map(|k| (k.gram(x1, x2), DMatrix::zeros(0, 0)))
                .collect(),
            Self::Coregionalized(terms) => terms
                .iter()
                .map(|t| (t.kernel.gram(x1, x2), t.coregion_matrix()))
                .collect(),
            Self::Transformed(_) => unreachable!("checked by caller"),
        }
    }

    /// Row-major `n×n` block of the untransformed kernel at `(k, l)`.
    fn fill_block(&self, grams: &[(DMatrix<f64>, DMatrix<f64>)], k: usize, l: usize, kb: &mut [f64]) {
        kb.fill(0.0);
        let n = self.outputs();
        match self {
            Self::Independent(_) => {
                for (i, (g, _)) in grams.iter().enumerate() {
                    kb[i * n + i] = g[(k, l)];
                }
            }
            Self::Coregionalized(_) => {
                for (g, b) in grams {
                    let gkl = g[(k, l)];
                    for i in 0..n {
                        for j in 0..n {
                            kb[i * n + j] += b[(i, j)] * gkl;
                        }
                    }
                }
            }
            Self::Transformed(_) => unreachable!("checked by caller"),
        }
    }

    /// `Σ_{ab} W_ab ∂K_ab/∂θ_j` for each kernel parameter, with `W` an
    /// output-major nN×nN matrix over the rows `x`.
    pub fn grad_trace(&self, x: &[Vec<f64>], w: &DMatrix<f64>) -> Result<Vec<f64>> {
        let n = self.outputs();
        let nn = x.len();
        if w.nrows() != n * nn || w.ncols() != n * nn {
            return Err(Error::Shape("grad_trace weight matrix has wrong size".into()));
        }
        match self {
            Self::Independent(ks) => {
                let mut out = Vec::with_capacity(self.num_params());
                for (i, k) in ks.iter().enumerate() {
                    let wi = w.view((i * nn, i * nn), (nn, nn)).into_owned();
                    out.extend(k.grad_trace(x, &wi));
                }
                Ok(out)
            }
            Self::Coregionalized(terms) => {
                let mut out = Vec::with_capacity(self.num_params());
                for t in terms {
                    let b = t.coregion_matrix();
                    let g = t.kernel.gram(x, x);
                    // G[i,j] = Σ_kl W[(i,k),(j,l)] k(x_k, x_l);  Weff = Σ_ij B_ij W_(i,j)
                    let mut gmat = DMatrix::zeros(n, n);
                    let mut weff = DMatrix::zeros(nn, nn);
                    for i in 0..n {
                        for j in 0..n {
                            let wij = w.view((i * nn, j * nn), (nn, nn));
                            gmat[(i, j)] = wij.component_mul(&g).sum();
                            weff += wij * b[(i, j)];
                        }
                    }
                    let gsym = &gmat + gmat.transpose();
                    // ∂/∂W_pq = Σ_j (G_pj + G_jp) W_jq
                    let gw = &gsym * &t.w;
                    out.extend(gw.iter().copied());
                    out.push(gmat.trace() * t.log_kappa.exp());
                    out.extend(t.kernel.grad_trace(x, &weff));
                }
                Ok(out)
            }
            Self::Transformed(t) => {
                let ts = projections(&t.config, x)?;
                let wt = pull_back_weights(w, &ts, n);
                t.inner.grad_trace(x, &wt)
            }
        }
    }
}

/// `Tᵀ W T` blockwise for output-major weights: block `(k, l)` becomes
/// `T_kᵀ W_(k,l) T_l`.
pub fn pull_back_weights(w: &DMatrix<f64>, ts: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let nn = ts.len();
    let mut out = DMatrix::zeros(n * nn, n * nn);
    // Row-major copies of the projections.
    let mut tf = vec![0.0; nn * n * n];
    for (k, t) in ts.iter().enumerate() {
        for i in 0..n {
            for m in 0..n {
                tf[k * n * n + i * n + m] = t[(i, m)];
            }
        }
    }
    let mut s = vec![0.0; n * n];
    let mut left = vec![0.0; n * n];
    for l in 0..nn {
        let tl = &tf[l * n * n..(l + 1) * n * n];
        for k in 0..nn {
            let tk = &tf[k * n * n..(k + 1) * n * n];
            for i in 0..n {
                for j in 0..n {
                    s[i * n + j] = w[(i * nn + k, j * nn + l)];
                }
            }
            // left = T_kᵀ S, then T_kᵀ S T_l
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for m in 0..n {
                        acc += tk[m * n + i] * s[m * n + j];
                    }
                    left[i * n + j] = acc;
                }
            }
            for j in 0..n {
                for i in 0..n {
                    let mut acc = 0.0;
                    for m in 0..n {
                        acc += left[i * n + m] * tl[m * n + j];
                    }
                    out[(i * nn + k, j * nn + l)] = acc;
                }
            }
        }
    }
    out
}
