//! The three benchmark systems: a particle sliding on a surface, a unicycle
//! with a rolling constraint and a pair of Duffing oscillators synchronized by
//! a tracking controller.
//!
//! Every system exposes one parameter vector `θ_p` shared by its constraint,
//! its mass matrix and the parametric part of its unconstrained acceleration:
//!
//! | system   | θ_p                               |
//! |----------|-----------------------------------|
//! | surface  | `(p1, p2, p3, p4, p5)`            |
//! | unicycle | `(I_c)`                           |
//! | duffing  | `(p1, p2, p3, k, c)`              |

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanics::{
    ConstraintModel, Configuration, InputLayout, State, UnconstrainedModel,
};

/// Standard gravity in m/s².
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    SurfaceParticle,
    Unicycle,
    Duffing,
}

impl SystemName {
    pub const ALL: [SystemName; 3] = [Self::SurfaceParticle, Self::Unicycle, Self::Duffing];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SurfaceParticle => "surface_particle",
            Self::Unicycle => "unicycle",
            Self::Duffing => "duffing",
        }
    }
}

impl fmt::Display for SystemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surface_particle" | "surface" => Ok(Self::SurfaceParticle),
            "unicycle" => Ok(Self::Unicycle),
            "duffing" => Ok(Self::Duffing),
            other => Err(Error::Domain(format!("unknown system '{other}'"))),
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// A constraint that also knows how to place a state on its manifold.
pub trait ManifoldConstraint: ConstraintModel {
    /// Input columns that are determined by the others.
    fn dependent_columns(&self, layout: InputLayout) -> Vec<usize>;
    /// Overwrites the dependent columns of `row` so that the position- and
    /// velocity-level constraints hold.
    fn project(&self, row: &mut [f64], layout: InputLayout, theta: &[f64]);
    /// Lowest-order constraint residual `c(q, q̇, t)`.
    fn residual(&self, row: &[f64], layout: InputLayout, theta: &[f64]) -> f64;
    /// Velocity-level residual `ċ` (equal to `residual` for non-holonomic constraints).
    fn velocity_residual(&self, row: &[f64], layout: InputLayout, theta: &[f64]) -> f64;
}

// ---------------------------------------------------------------------------
// Surface particle

/// `q3 = p1 q1² + p2 q2² + p3 q1 + p4 cos(p5 q1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticCosineSurface;

impl QuadraticCosineSurface {
    pub fn height(q1: f64, q2: f64, p: &[f64]) -> f64 {
        p[0] * q1 * q1 + p[1] * q2 * q2 + p[2] * q1 + p[3] * (p[4] * q1).cos()
    }

    pub fn gradient(q1: f64, q2: f64, p: &[f64]) -> (f64, f64) {
        (
            2.0 * p[0] * q1 + p[2] - p[3] * p[4] * (p[4] * q1).sin(),
            2.0 * p[1] * q2,
        )
    }
}

impl ConstraintModel for QuadraticCosineSurface {
    fn dof(&self) -> usize {
        3
    }
    fn rows(&self) -> usize {
        1
    }
    fn num_params(&self) -> usize {
        5
    }
    fn matrices(&self, x: &State, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        surface_constraint(x, p)
    }
}

/// Second time-derivative of the surface constraint as `A q̈ = b`.
pub fn surface_constraint(x: &State, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let (q1, q2) = (x.q[0], x.q[1]);
    let (qd1, qd2) = (x.qdot[0], x.qdot[1]);
    let a = DMatrix::from_row_slice(
        1,
        3,
        &[
            2.0 * p[0] * q1 + p[2] - p[3] * p[4] * (p[4] * q1).sin(),
            2.0 * p[1] * q2,
            -1.0,
        ],
    );
    let b = DVector::from_element(
        1,
        -2.0 * p[0] * qd1 * qd1 - 2.0 * p[1] * qd2 * qd2
            + p[3] * p[4] * p[4] * qd1 * qd1 * (p[4] * q1).cos(),
    );
    (a, b)
}

impl ManifoldConstraint for QuadraticCosineSurface {
    fn dependent_columns(&self, layout: InputLayout) -> Vec<usize> {
        vec![layout.q(2), layout.qdot(2)]
    }
    fn project(&self, row: &mut [f64], layout: InputLayout, p: &[f64]) {
        let (q1, q2) = (row[layout.q(0)], row[layout.q(1)]);
        let (g1, g2) = Self::gradient(q1, q2, p);
        row[layout.q(2)] = Self::height(q1, q2, p);
        row[layout.qdot(2)] = g1 * row[layout.qdot(0)] + g2 * row[layout.qdot(1)];
    }
    fn residual(&self, row: &[f64], layout: InputLayout, p: &[f64]) -> f64 {
        row[layout.q(2)] - Self::height(row[layout.q(0)], row[layout.q(1)], p)
    }
    fn velocity_residual(&self, row: &[f64], layout: InputLayout, p: &[f64]) -> f64 {
        let (g1, g2) = Self::gradient(row[layout.q(0)], row[layout.q(1)], p);
        row[layout.qdot(2)] - g1 * row[layout.qdot(0)] - g2 * row[layout.qdot(1)]
    }
}

/// `q3 = c1 q1 + c2 q2 + amp cos(freq q1)` with `θ' = (c1, c2, amp, freq)`.
///
/// Used as the target of cross-configuration transfer; shares mass and
/// unconstrained dynamics with the surface particle.
#[derive(Debug, Clone, Copy, Default)]
pub struct TiltedCosineSurface;

impl TiltedCosineSurface {
    /// `q3 = 0.1 q1 − 0.15 q2 − 0.1 cos(3 q1)`.
    pub const DEFAULT_THETA: [f64; 4] = [0.1, -0.15, -0.1, 3.0];

    pub fn height(q1: f64, q2: f64, p: &[f64]) -> f64 {
        p[0] * q1 + p[1] * q2 + p[2] * (p[3] * q1).cos()
    }

    pub fn gradient(q1: f64, _q2: f64, p: &[f64]) -> (f64, f64) {
        (p[0] - p[2] * p[3] * (p[3] * q1).sin(), p[1])
    }
}

impl ConstraintModel for TiltedCosineSurface {
    fn dof(&self) -> usize {
        3
    }
    fn rows(&self) -> usize {
        1
    }
    fn num_params(&self) -> usize {
        4
    }
    fn matrices(&self, x: &State, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let (g1, g2) = Self::gradient(x.q[0], x.q[1], p);
        let qd1 = x.qdot[0];
        let a = DMatrix::from_row_slice(1, 3, &[g1, g2, -1.0]);
        let b = DVector::from_element(1, p[2] * p[3] * p[3] * qd1 * qd1 * (p[3] * x.q[0]).cos());
        (a, b)
    }
}

impl ManifoldConstraint for TiltedCosineSurface {
    fn dependent_columns(&self, layout: InputLayout) -> Vec<usize> {
        vec![layout.q(2), layout.qdot(2)]
    }
    fn project(&self, row: &mut [f64], layout: InputLayout, p: &[f64]) {
        let (q1, q2) = (row[layout.q(0)], row[layout.q(1)]);
        let (g1, g2) = Self::gradient(q1, q2, p);
        row[layout.q(2)] = Self::height(q1, q2, p);
        row[layout.qdot(2)] = g1 * row[layout.qdot(0)] + g2 * row[layout.qdot(1)];
    }
    fn residual(&self, row: &[f64], layout: InputLayout, p: &[f64]) -> f64 {
        row[layout.q(2)] - Self::height(row[layout.q(0)], row[layout.q(1)], p)
    }
    fn velocity_residual(&self, row: &[f64], layout: InputLayout, p: &[f64]) -> f64 {
        let (g1, g2) = Self::gradient(row[layout.q(0)], row[layout.q(1)], p);
        row[layout.qdot(2)] - g1 * row[layout.qdot(0)] - g2 * row[layout.qdot(1)]
    }
}

/// Point mass under gravity, controls and velocity-quadratic damping.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceDynamics {
    pub mass: f64,
    pub damping: f64,
}

impl SurfaceDynamics {
    /// Unconstrained acceleration and non-ideal damping term.
    pub fn parts(&self, x: &State) -> (DVector<f64>, DVector<f64>) {
        let u = |i: usize| x.u.get(i).copied().unwrap_or(0.0);
        let a = DVector::from_column_slice(&[
            u(0) / self.mass,
            u(1) / self.mass,
            (u(2) - self.mass * GRAVITY) / self.mass,
        ]);
        (a, quadratic_damping(&x.qdot, self.damping, 3))
    }
}

/// `z_i = −a0 (v²/|v|) q̇_i` over the first `k` velocity components, with the
/// removable singularity at `v = 0` set to zero.
fn quadratic_damping(qdot: &DVector<f64>, a0: f64, k: usize) -> DVector<f64> {
    let v = qdot.rows(0, k).norm();
    let mut z = DVector::zeros(qdot.len());
    if v > 0.0 {
        for i in 0..k {
            z[i] = -a0 * v * qdot[i];
        }
    }
    z
}

impl UnconstrainedModel for SurfaceDynamics {
    fn dof(&self) -> usize {
        3
    }
    fn mass(&self, _x: &State, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(3, 3) * self.mass
    }
    fn accel(&self, x: &State, _theta: &[f64]) -> DVector<f64> {
        self.parts(x).0
    }
    fn nonideal(&self, x: &State) -> DVector<f64> {
        self.parts(x).1
    }
}

// ---------------------------------------------------------------------------
// Unicycle

/// Which algebraic form of the rolling constraint to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollingForm {
    /// `q̈2 − tan(q3) q̈1 = q̇1 q̇3 / cos²(q3)`; singular at ±90°.
    #[default]
    Tangent,
    /// `cos(q3) q̈2 − sin(q3) q̈1 = q̇3 (q̇1 cos q3 + q̇2 sin q3)`; bounded everywhere.
    Regular,
}

/// Rolling without side slip: `q̇2 = q̇1 tan(q3)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RollingConstraint {
    pub form: RollingForm,
}

impl ConstraintModel for RollingConstraint {
    fn dof(&self) -> usize {
        3
    }
    fn rows(&self) -> usize {
        1
    }
    fn num_params(&self) -> usize {
        1
    }
    fn matrices(&self, x: &State, _theta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let q3 = x.q[2];
        let (qd1, qd2, qd3) = (x.qdot[0], x.qdot[1], x.qdot[2]);
        match self.form {
            RollingForm::Tangent => {
                let c = q3.cos();
                (
                    DMatrix::from_row_slice(1, 3, &[-q3.tan(), 1.0, 0.0]),
                    DVector::from_element(1, qd1 * qd3 / (c * c)),
                )
            }
            RollingForm::Regular => {
                let (s, c) = q3.sin_cos();
                (
                    DMatrix::from_row_slice(1, 3, &[-s, c, 0.0]),
                    DVector::from_element(1, qd3 * (qd1 * c + qd2 * s)),
                )
            }
        }
    }
}

impl ManifoldConstraint for RollingConstraint {
    fn dependent_columns(&self, layout: InputLayout) -> Vec<usize> {
        vec![layout.qdot(1)]
    }
    fn project(&self, row: &mut [f64], layout: InputLayout, _theta: &[f64]) {
        let q3 = row[layout.q(2)];
        match self.form {
            RollingForm::Tangent => row[layout.qdot(1)] = row[layout.qdot(0)] * q3.tan(),
            RollingForm::Regular => {
                // keep the speed along the heading, drop the lateral part
                let (s, c) = q3.sin_cos();
                let speed = row[layout.qdot(0)] * c + row[layout.qdot(1)] * s;
                row[layout.qdot(0)] = speed * c;
                row[layout.qdot(1)] = speed * s;
            }
        }
    }
    fn residual(&self, row: &[f64], layout: InputLayout, _theta: &[f64]) -> f64 {
        let q3 = row[layout.q(2)];
        match self.form {
            RollingForm::Tangent => row[layout.qdot(1)] - row[layout.qdot(0)] * q3.tan(),
            RollingForm::Regular => {
                row[layout.qdot(1)] * q3.cos() - row[layout.qdot(0)] * q3.sin()
            }
        }
    }
    fn velocity_residual(&self, row: &[f64], layout: InputLayout, theta: &[f64]) -> f64 {
        self.residual(row, layout, theta)
    }
}

/// Planar rigid body driven along its heading (`u1`) and about its vertical
/// axis (`u2`), decelerated by velocity-quadratic damping in the plane.
#[derive(Debug, Clone, Copy)]
pub struct UnicycleDynamics {
    pub mass: f64,
    pub damping: f64,
}

impl UnicycleDynamics {
    fn inertia(theta: &[f64]) -> f64 {
        theta[0]
    }
}

impl UnconstrainedModel for UnicycleDynamics {
    fn dof(&self) -> usize {
        3
    }
    fn mass(&self, _x: &State, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&[
            self.mass,
            self.mass,
            Self::inertia(theta),
        ]))
    }
    fn accel(&self, x: &State, theta: &[f64]) -> DVector<f64> {
        let u = |i: usize| x.u.get(i).copied().unwrap_or(0.0);
        let (s, c) = x.q[2].sin_cos();
        DVector::from_column_slice(&[
            u(0) * c / self.mass,
            u(0) * s / self.mass,
            u(1) / Self::inertia(theta),
        ])
    }
    fn nonideal(&self, x: &State) -> DVector<f64> {
        quadratic_damping(&x.qdot, self.damping, 2)
    }
}

// ---------------------------------------------------------------------------
// Duffing oscillators

/// `q2 = q1 + p1 exp(−p2 t) sin(p3 t)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrackingConstraint;

impl TrackingConstraint {
    /// Offset `g(t)` and its first two time-derivatives.
    pub fn offset(t: f64, p: &[f64]) -> (f64, f64, f64) {
        let e = p[0] * (-p[1] * t).exp();
        let (s, c) = (p[2] * t).sin_cos();
        (
            e * s,
            e * (p[2] * c - p[1] * s),
            e * ((p[1] * p[1] - p[2] * p[2]) * s - 2.0 * p[1] * p[2] * c),
        )
    }
}

impl ConstraintModel for TrackingConstraint {
    fn dof(&self) -> usize {
        2
    }
    fn rows(&self) -> usize {
        1
    }
    fn num_params(&self) -> usize {
        3
    }
    fn matrices(&self, x: &State, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        duffing_constraint(x.t, p)
    }
}

/// `A = [−1, 1]`, `b = d²/dt² [p1 e^{−p2 t} sin(p3 t)]`.
pub fn duffing_constraint(t: f64, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let (_, _, gdd) = TrackingConstraint::offset(t, p);
    (
        DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]),
        DVector::from_element(1, gdd),
    )
}

impl ManifoldConstraint for TrackingConstraint {
    fn dependent_columns(&self, layout: InputLayout) -> Vec<usize> {
        vec![layout.q(1), layout.qdot(1)]
    }
    fn project(&self, row: &mut [f64], layout: InputLayout, p: &[f64]) {
        let (g, gd, _) = Self::offset(row[layout.t()], p);
        row[layout.q(1)] = row[layout.q(0)] + g;
        row[layout.qdot(1)] = row[layout.qdot(0)] + gd;
    }
    fn residual(&self, row: &[f64], layout: InputLayout, p: &[f64]) -> f64 {
        let (g, _, _) = Self::offset(row[layout.t()], p);
        row[layout.q(1)] - row[layout.q(0)] - g
    }
    fn velocity_residual(&self, row: &[f64], layout: InputLayout, p: &[f64]) -> f64 {
        let (_, gd, _) = Self::offset(row[layout.t()], p);
        row[layout.qdot(1)] - row[layout.qdot(0)] - gd
    }
}

/// Two masses with grounded and coupling springs (linear + cubic) and dampers.
/// The linear stiffness `k` and damping `c` are read from `θ = (.., k, c)`.
#[derive(Debug, Clone, Copy)]
pub struct DuffingDynamics {
    pub masses: [f64; 2],
    pub cubic_stiffness: f64,
}

impl DuffingDynamics {
    fn forces(&self, x: &State, k: f64, c: f64, k3: f64) -> [f64; 2] {
        let (q1, q2) = (x.q[0], x.q[1]);
        let (v1, v2) = (x.qdot[0], x.qdot[1]);
        let dq = q2 - q1;
        let dv = v2 - v1;
        let coupling = k * dq + k3 * dq.powi(3) + c * dv;
        [
            -k * q1 - k3 * q1.powi(3) - c * v1 + coupling,
            -k * q2 - k3 * q2.powi(3) - c * v2 - coupling,
        ]
    }

    /// Acceleration from the linear springs and dampers only.
    pub fn linear_accel(&self, x: &State, theta: &[f64]) -> DVector<f64> {
        let f = self.forces(x, theta[3], theta[4], 0.0);
        DVector::from_column_slice(&[f[0] / self.masses[0], f[1] / self.masses[1]])
    }
}

impl UnconstrainedModel for DuffingDynamics {
    fn dof(&self) -> usize {
        2
    }
    fn mass(&self, _x: &State, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.masses))
    }
    fn accel(&self, x: &State, theta: &[f64]) -> DVector<f64> {
        let f = self.forces(x, theta[3], theta[4], self.cubic_stiffness);
        DVector::from_column_slice(&[f[0] / self.masses[0], f[1] / self.masses[1]])
    }
    fn nonideal(&self, _x: &State) -> DVector<f64> {
        DVector::zeros(2)
    }
}

// ---------------------------------------------------------------------------
// Parameter sets (overridable from configuration files)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceParams {
    pub mass: f64,
    pub damping: f64,
    pub theta_star: [f64; 5],
    pub position_range: Interval,
    pub velocity_range: Interval,
    pub control_range: Interval,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            damping: 0.1,
            theta_star: [0.2, 0.1, 0.1, 0.3, 2.0],
            position_range: Interval::new(-1.0, 1.0),
            velocity_range: Interval::new(-1.0, 1.0),
            control_range: Interval::new(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnicycleParams {
    pub mass: f64,
    pub inertia: f64,
    pub damping: f64,
    pub position_range: Interval,
    /// Heading range in degrees; must stay inside (−90°, 90°).
    pub heading_range_deg: Interval,
    pub velocity_range: Interval,
    pub yaw_rate_range: Interval,
    pub control_range: Interval,
}

impl Default for UnicycleParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: 0.1,
            damping: 0.1,
            position_range: Interval::new(-1.0, 1.0),
            heading_range_deg: Interval::new(-45.0, 45.0),
            velocity_range: Interval::new(-1.0, 1.0),
            yaw_rate_range: Interval::new(-1.0, 1.0),
            control_range: Interval::new(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DuffingParams {
    pub masses: [f64; 2],
    pub stiffness: f64,
    pub cubic_stiffness: f64,
    pub damping: f64,
    pub tracking: [f64; 3],
    pub position_range: Interval,
    pub velocity_range: Interval,
    pub time_range: Interval,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self {
            masses: [1.0, 1.0],
            stiffness: 1.0,
            cubic_stiffness: 1.0,
            damping: 0.1,
            tracking: [0.5, 0.2, 2.0],
            position_range: Interval::new(-1.0, 1.0),
            velocity_range: Interval::new(-1.0, 1.0),
            time_range: Interval::new(0.0, 10.0),
        }
    }
}

/// Which system to build, with optional parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SystemConfig {
    SurfaceParticle(SurfaceParams),
    Unicycle(UnicycleParams),
    Duffing(DuffingParams),
}

impl SystemConfig {
    pub fn default_for(name: SystemName) -> Self {
        match name {
            SystemName::SurfaceParticle => Self::SurfaceParticle(SurfaceParams::default()),
            SystemName::Unicycle => Self::Unicycle(UnicycleParams::default()),
            SystemName::Duffing => Self::Duffing(DuffingParams::default()),
        }
    }

    pub fn name(&self) -> SystemName {
        match self {
            Self::SurfaceParticle(_) => SystemName::SurfaceParticle,
            Self::Unicycle(_) => SystemName::Unicycle,
            Self::Duffing(_) => SystemName::Duffing,
        }
    }
}

/// Control input schedule `t ↦ u` used for rollouts.
pub type ControlLaw = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// A fully assembled benchmark.
#[derive(Clone)]
pub struct BenchmarkSystem {
    pub name: SystemName,
    pub layout: InputLayout,
    pub dynamics: Arc<dyn UnconstrainedModel>,
    pub constraint: Arc<dyn ManifoldConstraint>,
    pub theta_star: Vec<f64>,
    pub theta_bounds: Vec<(f64, f64)>,
    pub param_names: Vec<&'static str>,
    /// Sampling interval per input column; dependent columns are overwritten
    /// by the manifold projection.
    pub state_domain: Vec<Interval>,
    pub control_law: Option<ControlLaw>,
    parametric_mean: ParametricMean,
}

#[derive(Clone, Copy)]
enum ParametricMean {
    Full,
    DuffingLinear(DuffingDynamics),
}

impl fmt::Debug for BenchmarkSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkSystem")
            .field("name", &self.name)
            .field("layout", &self.layout)
            .field("theta_star", &self.theta_star)
            .finish()
    }
}

impl BenchmarkSystem {
    pub fn from_config(config: &SystemConfig) -> Result<Self> {
        let sys = match config {
            SystemConfig::SurfaceParticle(p) => Self::surface_particle(p),
            SystemConfig::Unicycle(p) => Self::unicycle(p),
            SystemConfig::Duffing(p) => Self::duffing(p),
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn by_name(name: SystemName) -> Self {
        Self::from_config(&SystemConfig::default_for(name)).expect("defaults are valid")
    }

    pub fn surface_particle(p: &SurfaceParams) -> Self {
        let layout = InputLayout::new(3, 3);
        let mut domain = vec![Interval::point(0.0); layout.dim()];
        for i in 0..2 {
            domain[layout.q(i)] = p.position_range;
            domain[layout.qdot(i)] = p.velocity_range;
        }
        for i in 0..3 {
            domain[layout.u(i)] = p.control_range;
        }
        Self {
            name: SystemName::SurfaceParticle,
            layout,
            dynamics: Arc::new(SurfaceDynamics {
                mass: p.mass,
                damping: p.damping,
            }),
            constraint: Arc::new(QuadraticCosineSurface),
            theta_star: p.theta_star.to_vec(),
            theta_bounds: vec![(0.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (0.0, 1.0), (0.5, 4.0)],
            param_names: vec!["p1", "p2", "p3", "p4", "p5"],
            state_domain: domain,
            control_law: None,
            parametric_mean: ParametricMean::Full,
        }
    }

    pub fn unicycle(p: &UnicycleParams) -> Self {
        let layout = InputLayout::new(3, 2);
        let mut domain = vec![Interval::point(0.0); layout.dim()];
        domain[layout.q(0)] = p.position_range;
        domain[layout.q(1)] = p.position_range;
        domain[layout.q(2)] = Interval::new(
            p.heading_range_deg.lo.to_radians(),
            p.heading_range_deg.hi.to_radians(),
        );
        domain[layout.qdot(0)] = p.velocity_range;
        domain[layout.qdot(2)] = p.yaw_rate_range;
        domain[layout.u(0)] = p.control_range;
        domain[layout.u(1)] = p.control_range;
        Self {
            name: SystemName::Unicycle,
            layout,
            dynamics: Arc::new(UnicycleDynamics {
                mass: p.mass,
                damping: p.damping,
            }),
            constraint: Arc::new(RollingConstraint::default()),
            theta_star: vec![p.inertia],
            theta_bounds: vec![(0.01, 1.0)],
            param_names: vec!["I_c"],
            state_domain: domain,
            control_law: None,
            parametric_mean: ParametricMean::Full,
        }
    }

    pub fn duffing(p: &DuffingParams) -> Self {
        let layout = InputLayout::new(2, 0);
        let mut domain = vec![Interval::point(0.0); layout.dim()];
        domain[layout.q(0)] = p.position_range;
        domain[layout.qdot(0)] = p.velocity_range;
        domain[layout.t()] = p.time_range;
        let dynamics = DuffingDynamics {
            masses: p.masses,
            cubic_stiffness: p.cubic_stiffness,
        };
        Self {
            name: SystemName::Duffing,
            layout,
            dynamics: Arc::new(dynamics),
            constraint: Arc::new(TrackingConstraint),
            theta_star: vec![
                p.tracking[0],
                p.tracking[1],
                p.tracking[2],
                p.stiffness,
                p.damping,
            ],
            theta_bounds: vec![(0.0, 2.0), (0.0, 1.0), (0.5, 4.0), (0.1, 5.0), (0.0, 1.0)],
            param_names: vec!["p1", "p2", "p3", "k", "c"],
            state_domain: domain,
            control_law: None,
            parametric_mean: ParametricMean::DuffingLinear(dynamics),
        }
    }

    /// The surface particle moved onto `q3 = 0.1 q1 − 0.15 q2 − 0.1 cos(3 q1)`.
    /// Same mass and unconstrained dynamics, different constraint family.
    pub fn transfer_surface(source: &BenchmarkSystem) -> Result<Self> {
        if source.name != SystemName::SurfaceParticle {
            return Err(Error::Domain(
                "transfer target is defined for the surface particle only".into(),
            ));
        }
        Ok(Self {
            constraint: Arc::new(TiltedCosineSurface),
            theta_star: TiltedCosineSurface::DEFAULT_THETA.to_vec(),
            theta_bounds: vec![(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (0.5, 4.0)],
            param_names: vec!["c1", "c2", "amp", "freq"],
            ..source.clone()
        })
    }

    /// Same system with a different algebraic form of the rolling constraint.
    pub fn with_rolling_form(&self, form: RollingForm) -> Result<Self> {
        if self.name != SystemName::Unicycle {
            return Err(Error::Domain("rolling form applies to the unicycle only".into()));
        }
        Ok(Self {
            constraint: Arc::new(RollingConstraint { form }),
            ..self.clone()
        })
    }

    fn validate(&self) -> Result<()> {
        if self.theta_star.len() != self.theta_bounds.len() {
            return Err(Error::Domain("parameter/bounds length mismatch".into()));
        }
        for (i, (&v, &(lo, hi))) in self.theta_star.iter().zip(&self.theta_bounds).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(Error::Domain(format!(
                    "{} = {v} outside bounds [{lo}, {hi}]",
                    self.param_names[i]
                )));
            }
        }
        if self.state_domain.iter().any(|iv| !(iv.lo <= iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite()) {
            return Err(Error::Domain("empty or non-finite state domain".into()));
        }
        if self.name == SystemName::Unicycle {
            let h = self.state_domain[self.layout.q(2)];
            if h.lo <= -PI / 2.0 || h.hi >= PI / 2.0 {
                return Err(Error::Domain("unicycle heading range must stay inside ±90°".into()));
            }
        }
        let x = State::from_row(&vec![0.0; self.layout.dim()], self.layout);
        if crate::numerics::CholFactor::new(
            &self.dynamics.mass(&x, &self.theta_star),
            crate::numerics::JitterPolicy::none(),
        )
        .is_err()
        {
            return Err(Error::Domain("mass matrix is not positive definite".into()));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.layout.n
    }

    pub fn input_dim(&self) -> usize {
        self.layout.dim()
    }

    /// Columns sampled independently (everything not fixed by the manifold
    /// and with a nondegenerate interval).
    pub fn free_columns(&self) -> Vec<usize> {
        let dep = self.constraint.dependent_columns(self.layout);
        (0..self.layout.dim())
            .filter(|c| !dep.contains(c) && self.state_domain[*c].width() > 0.0)
            .collect()
    }

    pub fn configuration(&self) -> Configuration {
        self.configuration_with(self.theta_star.clone())
    }

    pub fn configuration_with(&self, theta: Vec<f64>) -> Configuration {
        let constraint: Arc<dyn ConstraintModel> = self.constraint.clone();
        Configuration::new(constraint, self.dynamics.clone(), theta, self.layout)
    }

    /// Analytic constrained acceleration at an input row (true parameters).
    pub fn acceleration(&self, row: &[f64]) -> Result<DVector<f64>> {
        self.configuration().acceleration_row(row)
    }

    /// `ā = a + z` at an input row.
    pub fn abar(&self, row: &[f64], theta: &[f64]) -> DVector<f64> {
        let x = State::from_row(row, self.layout);
        self.dynamics.accel(&x, theta) + self.dynamics.nonideal(&x)
    }

    /// Parametric prior mean for `ā`: the full unconstrained acceleration
    /// `a(x, θ)`, or only the linear spring/damper part for Duffing.
    pub fn parametric_mean(&self, row: &[f64], theta: &[f64]) -> DVector<f64> {
        let x = State::from_row(row, self.layout);
        match self.parametric_mean {
            ParametricMean::Full => self.dynamics.accel(&x, theta),
            ParametricMean::DuffingLinear(d) => d.linear_accel(&x, theta),
        }
    }

    /// Entries of θ_p that can be learned for the given prior-mean mode.
    ///
    /// Parameters that only enter the parametric mean are excluded when the
    /// mean is zero (they would not affect the likelihood). The unicycle mass
    /// is held fixed as a gauge, leaving `I_c`.
    pub fn trainable_params(&self, parametric_mean: bool) -> Vec<usize> {
        match (self.name, parametric_mean) {
            (SystemName::SurfaceParticle, _) => (0..self.theta_star.len()).collect(),
            (SystemName::Unicycle, true) => vec![0],
            (SystemName::Unicycle, false) => vec![],
            (SystemName::Duffing, true) => (0..5).collect(),
            (SystemName::Duffing, false) => (0..3).collect(),
        }
    }

    /// Places `row` on the constraint manifold for parameters `theta`.
    pub fn project_row(&self, row: &mut [f64], theta: &[f64]) {
        self.constraint.project(row, self.layout, theta);
    }

    pub fn control_at(&self, t: f64) -> DVector<f64> {
        match &self.control_law {
            Some(law) => law(t),
            None => DVector::zeros(self.layout.n_u),
        }
    }

    /// Surface height for the surface systems (`None` otherwise).
    pub fn surface_height(&self, q1: f64, q2: f64, theta: &[f64]) -> Option<f64> {
        match (self.name, self.constraint.num_params()) {
            (SystemName::SurfaceParticle, 5) => Some(QuadraticCosineSurface::height(q1, q2, theta)),
            (SystemName::SurfaceParticle, 4) => Some(TiltedCosineSurface::height(q1, q2, theta)),
            _ => None,
        }
    }

    pub fn surface_gradient(&self, q1: f64, q2: f64, theta: &[f64]) -> Option<(f64, f64)> {
        match (self.name, self.constraint.num_params()) {
            (SystemName::SurfaceParticle, 5) => {
                Some(QuadraticCosineSurface::gradient(q1, q2, theta))
            }
            (SystemName::SurfaceParticle, 4) => Some(TiltedCosineSurface::gradient(q1, q2, theta)),
            _ => None,
        }
    }
}
