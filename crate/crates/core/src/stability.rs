//! Linearized stability of steady rotation.
//!
//! The chain is lumped into `N` links: node 0 is pinned at the origin, node
//! `N` is the driven end at `(r, 0, ±h)` in the rotating frame, and the
//! `N - 1` interior nodes each carry mass `μL/N`. Links are stiff springs
//! with axial damping. In the frame co-rotating at `ω` the
//! interior nodes feel gravity, centrifugal and Coriolis forces, and drag
//! against air at rest in the inertial frame.
//!
//! A configuration is classified by `λ_max`, the largest real part of the
//! eigenvalues of the Jacobian of the lumped dynamics at equilibrium.
//!
//! Rest lengths live on the state. A free chain uses `L/N` for every link.
//! When a state is sampled from a continuous configuration, each link's
//! rest length is its chord minus the stretch `F/k` produced by the
//! continuous tension, so the springs carry the tension of the inextensible
//! chain instead of fighting the fixed anchors.

use nalgebra::{linalg::balancing::balance_parlett_reinsch, DMatrix, DVector, Matrix3, Vector3};
use nalgebra::linalg::Schur;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{self, ChainParams, Configuration, ControlInput, KinematicsError, ParamPoint};

/// Force residual accepted for an equilibrium, N.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-9;

const NEWTON_MAX_ITER: usize = 200;
const SCHUR_MAX_ITER: usize = 10_000;
const DRAG_STAGES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid lumped model: {0}")]
    InvalidModel(String),
    #[error("equilibrium solve did not converge (residual {residual:.3e} N after {iterations} iterations)")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("eigenvalue decomposition did not converge")]
    EigenFailure,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

pub type Result<T, E = StabilityError> = std::result::Result<T, E>;

/// Parameters of the lumped-mass approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumpedModelParams {
    /// Number of links `N`.
    pub link_count: usize,
    /// Link stiffness, N/m.
    pub stiffness: f64,
    /// Axial damping on link elongation rate, N·s/m.
    pub damping: f64,
    /// Linear air drag per node, N·s/m.
    pub drag_linear: f64,
    /// Quadratic air drag per node, kg/m.
    pub drag_quadratic: f64,
}

impl Default for LumpedModelParams {
    fn default() -> Self {
        Self {
            link_count: 10,
            stiffness: 1e4,
            damping: 0.5,
            drag_linear: 0.01,
            drag_quadratic: 0.0,
        }
    }
}

impl LumpedModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.link_count < 2 {
            return Err(StabilityError::InvalidModel("link_count must be at least 2".into()));
        }
        if !(self.stiffness > 0.0) {
            return Err(StabilityError::InvalidModel("stiffness must be positive".into()));
        }
        for (name, v) in [
            ("damping", self.damping),
            ("drag_linear", self.drag_linear),
            ("drag_quadratic", self.drag_quadratic),
        ] {
            if !(v >= 0.0) {
                return Err(StabilityError::InvalidModel(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn node_mass(&self, chain: &ChainParams) -> f64 {
        chain.total_mass() / self.link_count as f64
    }

    pub fn rest_length(&self, chain: &ChainParams) -> f64 {
        chain.length / self.link_count as f64
    }

    /// Same model without any dissipation.
    pub fn undamped(mut self) -> Self {
        self.damping = 0.0;
        self.drag_linear = 0.0;
        self.drag_quadratic = 0.0;
        self
    }
}

/// State of the interior nodes in the rotating frame.
///
/// `y = [x₁, ẋ₁, …, x_{N-1}, ẋ_{N-1}]`; the pinned node and the driven end
/// are kept apart as fixed anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedState {
    pub y: DVector<f64>,
    pub bottom: Vector3<f64>,
    pub top: Vector3<f64>,
    /// Rest length of link `j` (joining nodes `j` and `j + 1`), m.
    pub rest: Vec<f64>,
}

impl LumpedState {
    pub fn interior_count(&self) -> usize {
        self.y.len() / 6
    }

    pub fn link_count(&self) -> usize {
        self.interior_count() + 1
    }

    /// Position of node `i` in `0..=N`.
    pub fn position(&self, i: usize) -> Vector3<f64> {
        let n = self.link_count();
        if i == 0 {
            self.bottom
        } else if i == n {
            self.top
        } else {
            self.y.fixed_rows::<3>(6 * (i - 1)).into_owned()
        }
    }

    /// Rotating-frame velocity of node `i`; anchors are at rest.
    pub fn velocity(&self, i: usize) -> Vector3<f64> {
        let n = self.link_count();
        if i == 0 || i == n {
            Vector3::zeros()
        } else {
            self.y.fixed_rows::<3>(6 * (i - 1) + 3).into_owned()
        }
    }

    pub fn set_position(&mut self, i: usize, x: &Vector3<f64>) {
        self.y.fixed_rows_mut::<3>(6 * (i - 1)).copy_from(x);
    }

    pub fn set_velocity(&mut self, i: usize, v: &Vector3<f64>) {
        self.y.fixed_rows_mut::<3>(6 * (i - 1) + 3).copy_from(v);
    }

    pub fn zero_velocities(&mut self) {
        for i in 1..self.link_count() {
            self.set_velocity(i, &Vector3::zeros());
        }
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        (0..=self.link_count()).map(|i| self.position(i)).collect()
    }

    /// Samples a continuous configuration at `N + 1` equally spaced arc
    /// lengths with the bottom node at the origin, and sets each link's rest
    /// length so that it carries the continuous tension at its midpoint.
    pub fn from_configuration(config: &Configuration, stiffness: f64, link_count: usize) -> Self {
        let shape = &config.shape;
        let length = *shape.s.last().expect("non-empty shape");
        let z0 = shape.z[0];
        let point = |i: usize| {
            let (rho, z) = shape.position_at(length * i as f64 / link_count as f64);
            Vector3::new(rho, 0.0, z - z0)
        };
        let mut y = DVector::zeros(6 * (link_count - 1));
        for i in 1..link_count {
            y.fixed_rows_mut::<3>(6 * (i - 1)).copy_from(&point(i));
        }
        let n = shape.len();
        let mut state = LumpedState {
            y,
            bottom: Vector3::zeros(),
            top: Vector3::new(shape.rho[n - 1], 0.0, shape.z[n - 1] - z0),
            rest: Vec::with_capacity(link_count),
        };
        for j in 0..link_count {
            let chord = (state.position(j + 1) - state.position(j)).norm();
            let mid = length * (j as f64 + 0.5) / link_count as f64;
            state.rest.push(chord - shape.tension_at(mid) / stiffness);
        }
        state
    }

    /// Straight segment between the anchors with zero velocities.
    pub fn straight(bottom: Vector3<f64>, top: Vector3<f64>, link_count: usize, rest_length: f64) -> Self {
        let mut y = DVector::zeros(6 * (link_count - 1));
        for i in 1..link_count {
            let x = bottom + (top - bottom) * (i as f64 / link_count as f64);
            y.fixed_rows_mut::<3>(6 * (i - 1)).copy_from(&x);
        }
        LumpedState {
            y,
            bottom,
            top,
            rest: vec![rest_length; link_count],
        }
    }

    /// Moves the driven end, keeping the interior nodes.
    pub fn with_top(mut self, top: Vector3<f64>) -> Self {
        self.top = top;
        self
    }
}

/// Force exerted on node `a` by the link joining it to node `b`.
pub(crate) fn link_force(
    xa: &Vector3<f64>,
    xb: &Vector3<f64>,
    va: &Vector3<f64>,
    vb: &Vector3<f64>,
    stiffness: f64,
    damping: f64,
    rest: f64,
) -> Vector3<f64> {
    let delta = xb - xa;
    let len = delta.norm();
    let e = delta / len;
    let rate = (vb - va).dot(&e);
    e * (stiffness * (len - rest) + damping * rate)
}

/// Derivatives of [`link_force`] with respect to `δ = xb - xa` and
/// `w = vb - va`.
fn link_force_derivatives(
    delta: &Vector3<f64>,
    w: &Vector3<f64>,
    stiffness: f64,
    damping: f64,
    rest: f64,
) -> (Matrix3<f64>, Matrix3<f64>) {
    let len = delta.norm();
    let e = delta / len;
    let eet = e * e.transpose();
    let proj = Matrix3::identity() - eet;
    let mut d_delta = Matrix3::identity() * (stiffness * (1.0 - rest / len)) + eet * (stiffness * rest / len);
    if damping != 0.0 {
        d_delta += (proj * e.dot(w) + e * (w.transpose() * proj)) * (damping / len);
    }
    (d_delta, eet * damping)
}

/// `ẑ × x`.
fn z_cross(x: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(-x.y, x.x, 0.0)
}

fn z_cross_matrix() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
}

/// Air drag on a node moving at `v` relative to still air.
pub(crate) fn drag_force(v: &Vector3<f64>, linear: f64, quadratic: f64) -> Vector3<f64> {
    -v * (linear + quadratic * v.norm())
}

fn drag_derivative(v: &Vector3<f64>, linear: f64, quadratic: f64) -> Matrix3<f64> {
    let speed = v.norm();
    let mut d = Matrix3::identity() * -(linear + quadratic * speed);
    if quadratic != 0.0 && speed > 0.0 {
        d -= v * v.transpose() * (quadratic / speed);
    }
    d
}

fn check_dims(state: &LumpedState, model: &LumpedModelParams) {
    assert_eq!(
        state.y.len(),
        6 * (model.link_count - 1),
        "state dimension does not match link count"
    );
    assert_eq!(state.rest.len(), model.link_count, "one rest length per link");
}

/// Time derivative of `y` in the frame rotating at `omega`.
pub fn dynamics_rhs(
    state: &LumpedState,
    model: &LumpedModelParams,
    chain: &ChainParams,
    omega: f64,
) -> DVector<f64> {
    check_dims(state, model);
    let n = model.link_count;
    let m = model.node_mass(chain);
    let gravity = Vector3::new(0.0, 0.0, chain.gravity * m);
    let w2 = omega * omega;
    let mut out = DVector::zeros(state.y.len());
    for i in 1..n {
        let x = state.position(i);
        let v = state.velocity(i);
        let mut f = gravity;
        for (j, rest) in [(i - 1, state.rest[i - 1]), (i + 1, state.rest[i])] {
            f += link_force(&x, &state.position(j), &v, &state.velocity(j), model.stiffness, model.damping, rest);
        }
        f += Vector3::new(x.x, x.y, 0.0) * (m * w2);
        f += Vector3::new(v.y, -v.x, 0.0) * (2.0 * m * omega);
        let v_air = v + z_cross(&x) * omega;
        f += drag_force(&v_air, model.drag_linear, model.drag_quadratic);
        out.fixed_rows_mut::<3>(6 * (i - 1)).copy_from(&v);
        out.fixed_rows_mut::<3>(6 * (i - 1) + 3).copy_from(&(f / m));
    }
    out
}

/// Net force on each interior node with the velocities of `state`.
pub fn node_forces(
    state: &LumpedState,
    model: &LumpedModelParams,
    chain: &ChainParams,
    omega: f64,
) -> DVector<f64> {
    let rhs = dynamics_rhs(state, model, chain, omega);
    let m = model.node_mass(chain);
    let k = model.link_count - 1;
    DVector::from_fn(3 * k, |r, _| rhs[6 * (r / 3) + 3 + r % 3] * m)
}

/// Exact Jacobian of [`dynamics_rhs`] with respect to `y`.
pub fn analytic_jacobian(
    state: &LumpedState,
    model: &LumpedModelParams,
    chain: &ChainParams,
    omega: f64,
) -> DMatrix<f64> {
    check_dims(state, model);
    let n = model.link_count;
    let dim = 6 * (n - 1);
    let m = model.node_mass(chain);
    let inv_m = 1.0 / m;
    let mut jac = DMatrix::zeros(dim, dim);

    let centrifugal = Matrix3::new(omega * omega, 0.0, 0.0, 0.0, omega * omega, 0.0, 0.0, 0.0, 0.0);
    let coriolis = Matrix3::new(0.0, 2.0 * omega, 0.0, -2.0 * omega, 0.0, 0.0, 0.0, 0.0, 0.0);
    let spin = z_cross_matrix() * omega;

    for i in 1..n {
        let row = 6 * (i - 1) + 3;
        let pos = 6 * (i - 1);
        for r in 0..3 {
            jac[(pos + r, pos + 3 + r)] = 1.0;
        }
        let x = state.position(i);
        let v = state.velocity(i);

        let mut self_x = centrifugal;
        let mut self_v = coriolis;
        let drag = drag_derivative(&(v + z_cross(&x) * omega), model.drag_linear, model.drag_quadratic);
        self_x += drag * spin * inv_m;
        self_v += drag * inv_m;

        for (j, rest) in [(i - 1, state.rest[i - 1]), (i + 1, state.rest[i])] {
            let delta = state.position(j) - x;
            let w = state.velocity(j) - v;
            let (d_delta, d_w) = link_force_derivatives(&delta, &w, model.stiffness, model.damping, rest);
            self_x -= d_delta * inv_m;
            self_v -= d_w * inv_m;
            if j >= 1 && j < n {
                let col = 6 * (j - 1);
                add_block(&mut jac, row, col, &(d_delta * inv_m));
                add_block(&mut jac, row, col + 3, &(d_w * inv_m));
            }
        }
        add_block(&mut jac, row, pos, &self_x);
        add_block(&mut jac, row, pos + 3, &self_v);
    }
    jac
}

fn add_block(jac: &mut DMatrix<f64>, row: usize, col: usize, block: &Matrix3<f64>) {
    let mut view = jac.fixed_view_mut::<3, 3>(row, col);
    view += block;
}

/// Central finite-difference Jacobian of [`dynamics_rhs`].
pub fn finite_difference_jacobian(
    state: &LumpedState,
    model: &LumpedModelParams,
    chain: &ChainParams,
    omega: f64,
    step: f64,
) -> DMatrix<f64> {
    let dim = state.y.len();
    let mut jac = DMatrix::zeros(dim, dim);
    let mut probe = state.clone();
    for c in 0..dim {
        let orig = state.y[c];
        probe.y[c] = orig + step;
        let plus = dynamics_rhs(&probe, model, chain, omega);
        probe.y[c] = orig - step;
        let minus = dynamics_rhs(&probe, model, chain, omega);
        probe.y[c] = orig;
        jac.set_column(c, &((plus - minus) / (2.0 * step)));
    }
    jac
}

/// Static equilibrium in the rotating frame found by damped Newton on the
/// node positions, starting from `seed`. Velocities are zeroed.
///
/// Drag against still air twists the chain out of its plane. When Newton
/// fails from the planar seed, the drag coefficients are ramped up from
/// zero and each stage is seeded with the previous equilibrium.
pub fn solve_equilibrium(
    seed: &LumpedState,
    model: &LumpedModelParams,
    chain: &ChainParams,
    omega: f64,
) -> Result<(LumpedState, f64)> {
    model.validate()?;
    check_dims(seed, model);
    let direct = newton_equilibrium(seed, model, chain, omega);
    let has_drag = model.drag_linear > 0.0 || model.drag_quadratic > 0.0;
    if direct.is_ok() || !has_drag || omega == 0.0 {
        return direct;
    }
    let mut current = seed.clone();
    for stage in 0..=DRAG_STAGES {
        let frac = stage as f64 / DRAG_STAGES as f64;
        let staged = LumpedModelParams {
            drag_linear: model.drag_linear * frac,
            drag_quadratic: model.drag_quadratic * frac,
            ..*model
        };
        current = newton_equilibrium(&current, &staged, chain, omega)?.0;
    }
    newton_equilibrium(&current, model, chain, omega)
}

fn newton_equilibrium(
    seed: &LumpedState,
    model: &LumpedModelParams,
    chain: &ChainParams,
    omega: f64,
) -> Result<(LumpedState, f64)> {
    let k = model.link_count - 1;
    let m = model.node_mass(chain);
    let mut state = seed.clone();
    state.zero_velocities();

    let mut forces = node_forces(&state, model, chain, omega);
    let mut norm = forces.amax();
    let mut merit = forces.norm();
    for _ in 0..NEWTON_MAX_ITER {
        if norm <= EQUILIBRIUM_TOLERANCE {
            return Ok((state, norm));
        }
        let jac = analytic_jacobian(&state, model, chain, omega);
        let stiffness = DMatrix::from_fn(3 * k, 3 * k, |r, c| {
            m * jac[(6 * (r / 3) + 3 + r % 3, 6 * (c / 3) + c % 3)]
        });
        let Some(step) = stiffness.lu().solve(&(-&forces)) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = state.clone();
            for i in 0..k {
                let x = trial.position(i + 1) + step.fixed_rows::<3>(3 * i) * scale;
                trial.set_position(i + 1, &x);
            }
            let f = node_forces(&trial, model, chain, omega);
            let m2 = f.norm();
            if m2.is_finite() && (m2 < merit || f.amax() <= EQUILIBRIUM_TOLERANCE) {
                state = trial;
                norm = f.amax();
                merit = m2;
                forces = f;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm <= EQUILIBRIUM_TOLERANCE {
        Ok((state, norm))
    } else {
        Err(StabilityError::NonConvergence {
            residual: norm,
            iterations: NEWTON_MAX_ITER,
        })
    }
}

/// Eigenvalues of a general real square matrix via a balanced real Schur
/// decomposition, retried on the unbalanced matrix when the QR iteration
/// stalls.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let mut balanced = matrix.clone();
    balance_parlett_reinsch(&mut balanced);
    let schur = Schur::try_new(balanced, f64::EPSILON, SCHUR_MAX_ITER)
        .or_else(|| Schur::try_new(matrix.clone(), f64::EPSILON, SCHUR_MAX_ITER))
        .ok_or(StabilityError::EigenFailure)?;
    let values: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(StabilityError::EigenFailure);
    }
    Ok(values)
}

/// Largest real part among the eigenvalues of `matrix`.
pub fn lambda_max(matrix: &DMatrix<f64>) -> Result<f64> {
    Ok(max_real_part(&eigenvalues(matrix)?))
}

fn max_real_part(values: &[Complex64]) -> f64 {
    values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Largest real part of the spectrum, 1/s.
    pub lambda_max: f64,
    pub eigenvalues: Vec<Complex64>,
    pub equilibrium: LumpedState,
    /// Largest force imbalance at the equilibrium, N.
    pub residual_norm: f64,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.lambda_max <= 0.0
    }
}

/// Equilibrium and spectrum starting from an explicit seed.
pub fn analyze_seed(
    seed: &LumpedState,
    model: &LumpedModelParams,
    chain: &ChainParams,
    omega: f64,
) -> Result<StabilityReport> {
    let (equilibrium, residual_norm) = solve_equilibrium(seed, model, chain, omega)?;
    let jac = analytic_jacobian(&equilibrium, model, chain, omega);
    let eigenvalues = eigenvalues(&jac)?;
    Ok(StabilityReport {
        lambda_max: max_real_part(&eigenvalues),
        eigenvalues,
        equilibrium,
        residual_norm,
    })
}

/// Stability of a continuous configuration, seeding the lumped equilibrium
/// with its discretized shape.
pub fn analyze_configuration(
    config: &Configuration,
    model: &LumpedModelParams,
    chain: &ChainParams,
) -> Result<StabilityReport> {
    model.validate()?;
    let seed = LumpedState::from_configuration(config, model.stiffness, model.link_count);
    analyze_seed(&seed, model, chain, config.omega)
}

/// Closed interval sampled by a grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    /// A single value.
    pub fn fixed(value: f64) -> Self {
        Self { min: value, max: value, count: 1 }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + span * i as f64 / (self.count - 1) as f64
                }
            })
            .collect()
    }

    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            0.0
        }
    }
}

/// Sampling of the parameter cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub l_bar: AxisRange,
    pub t_bar: AxisRange,
    pub c: AxisRange,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, axis, lower_open) in [
            ("L_bar", &self.l_bar, true),
            ("T_bar", &self.t_bar, true),
            ("c", &self.c, false),
        ] {
            if axis.count == 0 {
                return Err(StabilityError::InvalidGrid(format!("{name} axis has no samples")));
            }
            if axis.count == 1 && axis.min != axis.max {
                return Err(StabilityError::InvalidGrid(format!(
                    "{name} axis needs at least 2 samples to span [{}, {}]",
                    axis.min, axis.max
                )));
            }
            if !(axis.min.is_finite() && axis.max.is_finite()) || axis.max < axis.min {
                return Err(StabilityError::InvalidGrid(format!("{name} bounds are not an interval")));
            }
            let low_ok = if lower_open { axis.min > 0.0 } else { axis.min >= 0.0 };
            if !low_ok {
                return Err(StabilityError::InvalidGrid(format!("{name} lower bound is outside the cube")));
            }
        }
        if self.c.max >= 1.0 {
            return Err(StabilityError::InvalidGrid("c upper bound must be below 1".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.l_bar.count * self.t_bar.count * self.c.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid indices `(L̄, T̄, c)` of the flat row-major index.
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let c = flat % self.c.count;
        let t = (flat / self.c.count) % self.t_bar.count;
        let l = flat / (self.c.count * self.t_bar.count);
        [l, t, c]
    }

    /// Points in row-major order: `L̄` outer, `T̄` middle, `c` inner.
    pub fn points(&self) -> Vec<ParamPoint> {
        let (ls, ts, cs) = (self.l_bar.values(), self.t_bar.values(), self.c.values());
        let mut out = Vec::with_capacity(self.len());
        for &l_bar in &ls {
            for &t_bar in &ts {
                for &c in &cs {
                    out.push(ParamPoint { l_bar, t_bar, c });
                }
            }
        }
        out
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    #[serde(rename = "L_bar")]
    pub l_bar: f64,
    #[serde(rename = "T_bar")]
    pub t_bar: f64,
    pub c: f64,
    /// `None` when no equilibrium could be established.
    pub lambda_max: Option<f64>,
    pub mode: u32,
    pub r: f64,
    pub omega: f64,
    pub h: f64,
    pub equilibrium_ok: bool,
}

impl GridRecord {
    pub fn point(&self) -> ParamPoint {
        ParamPoint {
            l_bar: self.l_bar,
            t_bar: self.t_bar,
            c: self.c,
        }
    }

    pub fn control(&self) -> ControlInput {
        ControlInput {
            r: self.r,
            omega: self.omega,
            h: self.h,
        }
    }

    /// `λ_max` with failed points treated as unstable.
    pub fn lambda_or_inf(&self) -> f64 {
        self.lambda_max.unwrap_or(f64::INFINITY)
    }
}

/// Evaluates one grid point. Failures are folded into the record.
pub fn evaluate_point(point: ParamPoint, model: &LumpedModelParams, chain: &ChainParams) -> GridRecord {
    let config = match kinematics::forward_map(point, chain) {
        Ok(c) => c,
        Err(_) => {
            return GridRecord {
                l_bar: point.l_bar,
                t_bar: point.t_bar,
                c: point.c,
                lambda_max: None,
                mode: 0,
                r: f64::NAN,
                omega: f64::NAN,
                h: f64::NAN,
                equilibrium_ok: false,
            }
        }
    };
    let report = analyze_configuration(&config, model, chain);
    GridRecord {
        l_bar: point.l_bar,
        t_bar: point.t_bar,
        c: point.c,
        lambda_max: report.as_ref().ok().map(|r| r.lambda_max),
        mode: config.mode,
        r: config.control.r,
        omega: config.control.omega,
        h: config.control.h,
        equilibrium_ok: report.is_ok(),
    }
}

/// Stability over a grid of the parameter cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub grid: GridSpec,
    pub model: LumpedModelParams,
    pub chain: ChainParams,
    pub records: Vec<GridRecord>,
}

impl StabilityMap {
    pub fn index(&self, l: usize, t: usize, c: usize) -> usize {
        (l * self.grid.t_bar.count + t) * self.grid.c.count + c
    }

    pub fn get(&self, l: usize, t: usize, c: usize) -> &GridRecord {
        &self.records[self.index(l, t, c)]
    }
}

/// Sweeps the grid. With `jobs > 1` points are evaluated on a dedicated
/// thread pool; records are always returned in grid order.
pub fn stability_grid(
    grid: &GridSpec,
    model: &LumpedModelParams,
    chain: &ChainParams,
    jobs: usize,
) -> Result<StabilityMap> {
    grid.validate()?;
    model.validate()?;
    chain.validate()?;
    let points = grid.points();
    let records: Vec<GridRecord> = if jobs <= 1 {
        points.iter().map(|&p| evaluate_point(p, model, chain)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| StabilityError::InvalidGrid(e.to_string()))?;
        pool.install(|| points.par_iter().map(|&p| evaluate_point(p, model, chain)).collect())
    };
    Ok(StabilityMap {
        grid: *grid,
        model: *model,
        chain: *chain,
        records,
    })
}
