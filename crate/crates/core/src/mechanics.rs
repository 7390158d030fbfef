//! Constrained rigid-body accelerations via the Udwadia-Kalaba equation.
//!
//! A system is described by its mass matrix `M`, the unconstrained
//! acceleration `a`, a non-ideal constraining acceleration `z` and an affine
//! constraining equation `A(x) q̈ = b(x)`. The realized acceleration is
//!
//! ```text
//! q̈ = L b + T (a + z),   L = M⁻¹Aᵀ(AM⁻¹Aᵀ)⁺,   T = I − L A
//! ```
//!
//! which is the minimizer of `(q̈ − ā)ᵀ M (q̈ − ā)` over all `q̈` with `A q̈ = b`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, CholFactor, JitterPolicy};

/// Relative smallest-singular-value threshold below which `AM⁻¹Aᵀ` counts as singular.
pub const NONSINGULAR_RTOL: f64 = 1e-8;

/// Column layout of a flattened input row `(q, q̇, t, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub n: usize,
    pub n_u: usize,
}

impl InputLayout {
    pub fn new(n: usize, n_u: usize) -> Self {
        Self { n, n_u }
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1 + self.n_u
    }

    pub fn q(&self, i: usize) -> usize {
        i
    }

    pub fn qdot(&self, i: usize) -> usize {
        self.n + i
    }

    pub fn t(&self) -> usize {
        2 * self.n
    }

    pub fn u(&self, i: usize) -> usize {
        2 * self.n + 1 + i
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        names.extend((1..=self.n).map(|i| format!("q{i}")));
        names.extend((1..=self.n).map(|i| format!("qd{i}")));
        names.push("t".to_string());
        names.extend((1..=self.n_u).map(|i| format!("u{i}")));
        names
    }
}

/// A point `x = (q, q̇, t, u)` of a system's input space. `u` is empty when the
/// system has no control inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub t: f64,
    pub u: DVector<f64>,
}

impl State {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>, t: f64) -> Self {
        Self {
            q,
            qdot,
            t,
            u: DVector::zeros(0),
        }
    }

    pub fn with_control(mut self, u: DVector<f64>) -> Self {
        self.u = u;
        self
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn layout(&self) -> InputLayout {
        InputLayout::new(self.q.len(), self.u.len())
    }

    pub fn from_row(row: &[f64], layout: InputLayout) -> Self {
        let n = layout.n;
        debug_assert_eq!(row.len(), layout.dim());
        Self {
            q: DVector::from_column_slice(&row[..n]),
            qdot: DVector::from_column_slice(&row[n..2 * n]),
            t: row[2 * n],
            u: DVector::from_column_slice(&row[2 * n + 1..]),
        }
    }

    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(2 * self.q.len() + 1 + self.u.len());
        row.extend(self.q.iter());
        row.extend(self.qdot.iter());
        row.push(self.t);
        row.extend(self.u.iter());
        row
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).chain(self.u.iter()).all(|v| v.is_finite())
            && self.t.is_finite()
    }
}

/// Affine constraining equation `A(x, θ) q̈ = b(x, θ)`.
pub trait ConstraintModel: Send + Sync {
    fn dof(&self) -> usize;
    fn rows(&self) -> usize;
    fn num_params(&self) -> usize;
    fn matrices(&self, x: &State, theta: &[f64]) -> (DMatrix<f64>, DVector<f64>);
}

/// Dynamics of the system before the constraining equation is imposed.
pub trait UnconstrainedModel: Send + Sync {
    fn dof(&self) -> usize;
    /// Mass matrix `M(x, θ)`; must be symmetric positive definite.
    fn mass(&self, x: &State, theta: &[f64]) -> DMatrix<f64>;
    /// Unconstrained acceleration `a(x, θ) = M⁻¹ F_a`.
    fn accel(&self, x: &State, theta: &[f64]) -> DVector<f64>;
    /// Non-ideal constraining acceleration `z(x)` (damping, friction).
    fn nonideal(&self, x: &State) -> DVector<f64>;
}

/// State-independent constraint, mostly useful for tests and the vacuous case.
#[derive(Debug, Clone)]
pub struct FixedConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl FixedConstraint {
    /// `0 · q̈ = 0`: imposes nothing.
    pub fn vacuous(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(1, n),
            b: DVector::zeros(1),
        }
    }
}

impl ConstraintModel for FixedConstraint {
    fn dof(&self) -> usize {
        self.a.ncols()
    }
    fn rows(&self) -> usize {
        self.a.nrows()
    }
    fn num_params(&self) -> usize {
        0
    }
    fn matrices(&self, _x: &State, _theta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

/// The two operators of the UKE evaluated at one state.
#[derive(Debug, Clone)]
pub struct Projection {
    /// `L = M⁻¹Aᵀ(AM⁻¹Aᵀ)⁺`, shape n×m.
    pub l: DMatrix<f64>,
    /// `T = I − L A`, shape n×n.
    pub t: DMatrix<f64>,
}

fn check_mass(m: &DMatrix<f64>) -> Result<CholFactor> {
    numerics::ensure_finite(m, "mass matrix")?;
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "mass matrix must be square, got {:?}",
            m.shape()
        )));
    }
    CholFactor::new(m, JitterPolicy::none())
        .map_err(|_| Error::Domain("mass matrix is not symmetric positive definite".into()))
}

/// Computes `L` and `T` for a mass matrix and constraint matrix.
pub fn projection_ops(m: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Projection> {
    let chol = check_mass(m)?;
    numerics::ensure_finite(a, "constraint matrix")?;
    let n = m.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!(
            "constraint matrix has {} columns, mass matrix is {n}x{n}",
            a.ncols()
        )));
    }
    let minv_at = chol.solve(&a.transpose());
    let gram = a * &minv_at;
    let l = &minv_at * numerics::pseudo_inverse(&gram)?;
    let t = DMatrix::identity(n, n) - &l * a;
    Ok(Projection { l, t })
}

/// Whether `AM⁻¹Aᵀ` is numerically nonsingular (smallest singular value above
/// [`NONSINGULAR_RTOL`] times the largest).
pub fn constraint_gram_nonsingular(m: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<bool> {
    let chol = check_mass(m)?;
    let gram = a * chol.solve(&a.transpose());
    let s = numerics::singular_values(&gram)?;
    if s.is_empty() {
        return Ok(true);
    }
    let max = s[0];
    let min = s[s.len() - 1];
    Ok(max > 0.0 && min > NONSINGULAR_RTOL * max)
}

/// UKE from explicit parts: `q̈ = L b + T ā`.
pub fn uke_from_parts(
    m: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    abar: &DVector<f64>,
) -> Result<DVector<f64>> {
    if b.len() != a.nrows() || abar.len() != m.nrows() {
        return Err(Error::Shape("uke_from_parts: inconsistent lengths".into()));
    }
    let p = projection_ops(m, a)?;
    Ok(&p.l * b + &p.t * abar)
}

/// Constrained acceleration of `sys` subject to `con` at state `x`.
pub fn uke_acceleration(
    sys: &dyn UnconstrainedModel,
    con: &dyn ConstraintModel,
    x: &State,
    theta: &[f64],
) -> Result<DVector<f64>> {
    let m = sys.mass(x, theta);
    let (a, b) = con.matrices(x, theta);
    let abar = sys.accel(x, theta) + sys.nonideal(x);
    uke_from_parts(&m, &a, &b, &abar)
}

/// Gauss' functional `(q̈ − ā)ᵀ M (q̈ − ā)`.
pub fn gauss_functional(m: &DMatrix<f64>, qddot: &DVector<f64>, abar: &DVector<f64>) -> Result<f64> {
    if m.nrows() != qddot.len() || qddot.len() != abar.len() || !m.is_square() {
        return Err(Error::Shape("gauss_functional: inconsistent shapes".into()));
    }
    let tau = qddot - abar;
    Ok(tau.dot(&(m * &tau)))
}

/// A constraint configuration together with the dynamics that supply `M` and
/// `ā`, evaluated at one parameter vector.
#[derive(Clone)]
pub struct Configuration {
    pub constraint: Arc<dyn ConstraintModel>,
    pub dynamics: Arc<dyn UnconstrainedModel>,
    pub theta: Vec<f64>,
    pub layout: InputLayout,
}

impl std::fmt::Debug for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Configuration")
            .field("theta", &self.theta)
            .field("layout", &self.layout)
            .finish()
    }
}

impl Configuration {
    pub fn new(
        constraint: Arc<dyn ConstraintModel>,
        dynamics: Arc<dyn UnconstrainedModel>,
        theta: Vec<f64>,
        layout: InputLayout,
    ) -> Self {
        Self {
            constraint,
            dynamics,
            theta,
            layout,
        }
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }

    /// `(L b, T)` at an input row.
    pub fn project_row(&self, row: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let x = State::from_row(row, self.layout);
        let m = self.dynamics.mass(&x, &self.theta);
        let (a, b) = self.constraint.matrices(&x, &self.theta);
        let p = projection_ops(&m, &a)?;
        Ok((&p.l * b, p.t))
    }

    /// Analytic constrained acceleration at an input row.
    pub fn acceleration_row(&self, row: &[f64]) -> Result<DVector<f64>> {
        let x = State::from_row(row, self.layout);
        uke_acceleration(
            self.dynamics.as_ref(),
            self.constraint.as_ref(),
            &x,
            &self.theta,
        )
    }

    /// `‖A q̈ − b‖_∞` at an input row.
    pub fn constraint_residual(&self, row: &[f64], qddot: &DVector<f64>) -> f64 {
        let x = State::from_row(row, self.layout);
        let (a, b) = self.constraint.matrices(&x, &self.theta);
        (a * qddot - b).amax()
    }
}
