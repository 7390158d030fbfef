//! Dense linear algebra with fixed conditioning policies.
//!
//! Everything here works on `nalgebra` dynamic matrices. Two policies are
//! pinned so that rank-deficient and near-singular inputs behave the same way
//! on every call:
//!
//! * the pseudoinverse truncates singular values below `PINV_RTOL * sigma_max`;
//! * Cholesky factorizations retry with a diagonal jitter ladder that starts at
//!   `1e-10 * mean(diag)` and grows by ×10 up to `1e-4 * mean(diag)`.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by [`pseudo_inverse`].
pub const PINV_RTOL: f64 = 1e-10;

/// Relative tolerance for the symmetry precondition of the Cholesky routines.
pub const SYMMETRY_RTOL: f64 = 1e-8;

const JACOBI_MAX_SWEEPS: usize = 60;

pub fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Thin SVD `m = U diag(s) Vᵀ` by one-sided Jacobi rotations, with `m`
/// tall (rows ≥ cols). Returns `(U·diag(s), s, V)`; singular values unsorted.
fn jacobi_svd_tall(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let c = m.ncols();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(c, c);
    // Columns below roundoff of the whole matrix are treated as exact zeros.
    let negligible = (f64::EPSILON * m.norm()).powi(2);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let x = mat[(i, p)];
                        let y = mat[(i, q)];
                        mat[(i, p)] = cs * x - sn * y;
                        mat[(i, q)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            let s = DVector::from_iterator(c, (0..c).map(|j| a.column(j).norm()));
            return Ok((a, s, v));
        }
    }
    Err(Error::SvdFailed {
        rows: m.nrows(),
        cols: m.ncols(),
        max_abs: max_abs(m),
    })
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    ensure_finite(m, "singular_values input")?;
    if m.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let (_, s, _) = if m.nrows() >= m.ncols() {
        jacobi_svd_tall(m)?
    } else {
        jacobi_svd_tall(&m.transpose())?
    };
    let mut s: Vec<f64> = s.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(DVector::from_vec(s))
}

/// Moore-Penrose pseudoinverse via SVD with relative truncation at [`PINV_RTOL`].
pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(m, "pseudo_inverse input")?;
    let (r, c) = m.shape();
    if m.is_empty() {
        return Ok(DMatrix::zeros(c, r));
    }
    // 1x1 is by far the most common call (single constraint row).
    if r == 1 && c == 1 {
        let v = m[(0, 0)];
        return Ok(DMatrix::from_element(1, 1, if v == 0.0 { 0.0 } else { 1.0 / v }));
    }
    if r < c {
        return Ok(pseudo_inverse(&m.transpose())?.transpose());
    }
    let (us, s, v) = jacobi_svd_tall(m)?;
    let sigma_max = s.iter().fold(0.0_f64, |a, &x| a.max(x));
    let cutoff = PINV_RTOL * sigma_max;
    let mut out = DMatrix::zeros(c, r);
    for (k, &sk) in s.iter().enumerate() {
        if sk > cutoff && sk > 0.0 {
            // out += v_k u_kᵀ / s_k, with us_k = s_k u_k
            out.ger(1.0 / (sk * sk), &v.column(k), &us.column(k), 1.0);
        }
    }
    Ok(out)
}

/// Diagonal jitter schedule applied when a Cholesky factorization fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
    pub factor: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-10,
            max: 1e-4,
            factor: 10.0,
        }
    }
}

impl JitterPolicy {
    /// No retries: the matrix must factor as given.
    pub fn none() -> Self {
        Self {
            initial: 0.0,
            max: 0.0,
            factor: 10.0,
        }
    }
}

/// A Cholesky factor together with the absolute jitter that was needed.
#[derive(Debug, Clone)]
pub struct CholFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl CholFactor {
    pub fn new(spd: &DMatrix<f64>, policy: JitterPolicy) -> Result<Self> {
        ensure_finite(spd, "Cholesky input")?;
        let n = spd.nrows();
        if n != spd.ncols() {
            return Err(Error::Shape(format!(
                "Cholesky needs a square matrix, got {}x{}",
                n,
                spd.ncols()
            )));
        }
        check_symmetric(spd)?;
        if let Some(chol) = spd.clone().cholesky() {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let mean_diag = if n == 0 {
            0.0
        } else {
            spd.diagonal().iter().sum::<f64>() / n as f64
        };
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut rel = policy.initial;
        let mut last = 0.0;
        while rel > 0.0 && rel <= policy.max * (1.0 + 1e-12) {
            let jitter = rel * scale;
            last = jitter;
            let mut m = spd.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = m.cholesky() {
                return Ok(Self { chol, jitter });
            }
            rel *= policy.factor;
        }
        Err(Error::NotPositiveDefinite { jitter: last })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// Solves `L x = rhs` (forward substitution only).
    pub fn solve_lower(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.chol.l();
        l.solve_lower_triangular(rhs)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `(L Lᵀ)⁻¹` as `L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        // Only the lower triangle of the dirty factor is meaningful.
        let l = self.chol.l_dirty().as_slice();
        let mut linv = vec![0.0; n * n];
        for j in 0..n {
            let x = &mut linv[j * n..(j + 1) * n];
            x[j] = 1.0;
            for k in j..n {
                let xk = x[k] / l[k * n + k];
                x[k] = xk;
                if xk != 0.0 {
                    let col = &l[k * n..(k + 1) * n];
                    for i in (k + 1)..n {
                        x[i] -= xk * col[i];
                    }
                }
            }
        }
        // Entry (i, j) of L⁻ᵀL⁻¹ sums over rows k ≥ max(i, j).
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let cj = &linv[j * n..(j + 1) * n];
            for i in j..n {
                let ci = &linv[i * n..(i + 1) * n];
                let v: f64 = ci[i..].iter().zip(&cj[i..]).map(|(a, b)| a * b).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(Error::Domain(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Solves `spd * X = rhs` through a (possibly jittered) Cholesky factor.
pub fn chol_solve(
    spd: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    policy: JitterPolicy,
) -> Result<DMatrix<f64>> {
    ensure_finite(rhs, "chol_solve rhs")?;
    if rhs.nrows() != spd.nrows() {
        return Err(Error::Shape(format!(
            "rhs has {} rows, matrix is {}x{}",
            rhs.nrows(),
            spd.nrows(),
            spd.ncols()
        )));
    }
    Ok(CholFactor::new(spd, policy)?.solve(rhs))
}

/// Log-determinant of an SPD matrix from its (possibly jittered) Cholesky factor.
pub fn log_det_chol(spd: &DMatrix<f64>, policy: JitterPolicy) -> Result<f64> {
    Ok(CholFactor::new(spd, policy)?.log_det())
}

/// Symmetrizes in place: `m <- (m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(sym: &DMatrix<f64>) -> Result<(f64, f64)> {
    ensure_finite(sym, "eigen_range input")?;
    if sym.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut s = sym.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

/// Largest absolute entry, used for `‖·‖_∞`-style elementwise checks.
pub fn max_abs_entry(m: &DMatrix<f64>) -> f64 {
    max_abs(m)
}
