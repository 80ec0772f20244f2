//! Steady shapes of a chain spinning about a vertical axis with its bottom
//! end pinned to the axis.
//!
//! The shape problem is solved in Kolodner's dimensionless variables. With
//! `s̄ = s·ω²/|g|` and `T̄ = T·ω²/(μ·g²)` the radial offset is carried by
//!
//! ```text
//! u'' + u / sqrt((s̄ + T̄)² + u²) = 0,    u'(0) = 0,   u(0) = c/sqrt(1-c²)·T̄
//! ```
//!
//! and the physical shape is recovered from `ρ = -(|g|/ω²)·u'`,
//! `ρ' = u / sqrt((s̄+T̄)² + u²)` and `z' = sqrt(1 - ρ'²)`.
//!
//! A point `(L̄, T̄, c)` of the parameter cube determines a unique
//! configuration through [`forward_map`]. Going the other way, from a
//! control `(r, ω)` and bottom slope `c`, is a boundary value problem that
//! [`shoot`] solves and which may have several solutions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnitude of gravitational acceleration used by default, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Fixed integration steps used when the caller does not ask for another count.
pub const DEFAULT_STEPS: usize = 200;

/// Smallest step count accepted by [`integrate_shape`].
pub const MIN_STEPS: usize = 10;

/// Dead band on `|u'|` used when counting axis crossings.
pub const MODE_DEAD_BAND: f64 = 1e-9;

/// Required shooting residual on `u'(L̄) - r̄`.
pub const SHOOT_TOLERANCE: f64 = 1e-8;

/// Roots of the shooting residual closer than this in `T̄` are merged.
pub const ROOT_SEPARATION: f64 = 1e-6;

const NEWTON_MAX_ITER: usize = 100;

/// Halvings of the first scan interval sampled by [`shoot`].
const LOW_TENSION_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid chain parameters: {0}")]
    InvalidChain(String),
    #[error("omega must be positive, got {0}")]
    NonPositiveOmega(f64),
    #[error("bottom tension must be non-negative, got {0}")]
    NegativeTension(f64),
    #[error("bottom slope rho'(0) must lie in [0, 1), got {0}")]
    SlopeOutOfRange(f64),
    #[error("{0}")]
    PointOutsideCube(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("shooting did not converge near T_bar = {t_bar} after {iterations} iterations")]
    NonConvergence { t_bar: f64, iterations: usize },
    #[error("shape never leaves the rotation axis")]
    DegenerateShape,
}

pub type Result<T, E = KinematicsError> = std::result::Result<T, E>;

/// Which way gravity points relative to the rotation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Pinned end at the bottom, gravity along -z.
    General,
    /// Gravity reversed; the driven end sits below the pinned end.
    Yarn,
}

/// Physical chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Length, m.
    pub length: f64,
    /// Linear density, kg/m.
    pub linear_density: f64,
    /// Signed gravitational acceleration along z, m/s². Negative is the
    /// ordinary setup, positive the reversed (yarn) one.
    pub gravity: f64,
}

impl ChainParams {
    pub fn new(length: f64, linear_density: f64, gravity: f64) -> Result<Self> {
        let p = Self {
            length,
            linear_density,
            gravity,
        };
        p.validate()?;
        Ok(p)
    }

    /// Chain in the ordinary orientation with standard gravity.
    pub fn general(length: f64, linear_density: f64) -> Result<Self> {
        Self::new(length, linear_density, -STANDARD_GRAVITY)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(KinematicsError::InvalidChain(
                "length must be positive".into(),
            ));
        }
        if !(self.linear_density > 0.0 && self.linear_density.is_finite()) {
            return Err(KinematicsError::InvalidChain(
                "linear density must be positive".into(),
            ));
        }
        if self.gravity == 0.0 || !self.gravity.is_finite() {
            return Err(KinematicsError::InvalidChain(
                "gravity must be non-zero".into(),
            ));
        }
        Ok(())
    }

    pub fn orientation(&self) -> Orientation {
        if self.gravity < 0.0 {
            Orientation::General
        } else {
            Orientation::Yarn
        }
    }

    /// Same chain with gravity set for the given orientation.
    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        let g = self.gravity.abs();
        self.gravity = match orientation {
            Orientation::General => -g,
            Orientation::Yarn => g,
        };
        self
    }

    pub fn g_abs(&self) -> f64 {
        self.gravity.abs()
    }

    /// Unit direction of the driven end relative to the pinned end along z.
    pub fn up(&self) -> f64 {
        -self.gravity.signum()
    }

    pub fn total_mass(&self) -> f64 {
        self.length * self.linear_density
    }

    /// Rotation speed whose dimensionless length is `l_bar`.
    pub fn omega_for_l_bar(&self, l_bar: f64) -> f64 {
        (l_bar * self.g_abs() / self.length).sqrt()
    }

    pub fn l_bar_for_omega(&self, omega: f64) -> f64 {
        self.length * omega * omega / self.g_abs()
    }
}

/// Upper corner of the parameter cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeLimits {
    pub l_bar_max: f64,
    pub t_bar_max: f64,
}

impl Default for CubeLimits {
    fn default() -> Self {
        Self {
            l_bar_max: 30.0,
            t_bar_max: 10.0,
        }
    }
}

/// A point `(L̄, T̄, c)` of the parameter cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub l_bar: f64,
    pub t_bar: f64,
    pub c: f64,
}

impl ParamPoint {
    pub fn new(l_bar: f64, t_bar: f64, c: f64) -> Result<Self> {
        let p = Self { l_bar, t_bar, c };
        p.validate()?;
        Ok(p)
    }

    /// Checks the open-cube invariants except the upper corner, which
    /// depends on the [`CubeLimits`] in use.
    pub fn validate(&self) -> Result<()> {
        if !(self.l_bar > 0.0 && self.l_bar.is_finite()) {
            return Err(KinematicsError::PointOutsideCube(
                "L_bar must be positive".into(),
            ));
        }
        if !(self.t_bar > 0.0 && self.t_bar.is_finite()) {
            return Err(KinematicsError::PointOutsideCube(
                "T_bar must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(KinematicsError::PointOutsideCube(
                "c must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn within(&self, limits: &CubeLimits) -> bool {
        self.validate().is_ok() && self.l_bar <= limits.l_bar_max && self.t_bar <= limits.t_bar_max
    }

    /// Initial value `u(0)` of the shape equation.
    pub fn u0(&self) -> f64 {
        self.c / (1.0 - self.c * self.c).sqrt() * self.t_bar
    }

    pub fn lerp(&self, other: &ParamPoint, t: f64) -> ParamPoint {
        ParamPoint {
            l_bar: self.l_bar + (other.l_bar - self.l_bar) * t,
            t_bar: self.t_bar + (other.t_bar - self.t_bar) * t,
            c: self.c + (other.c - self.c) * t,
        }
    }
}

/// Robot-side description of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Attachment radius, m.
    pub r: f64,
    /// Rotation speed, rad/s.
    pub omega: f64,
    /// Vertical distance between the two ends, m.
    pub h: f64,
}

impl ControlInput {
    pub fn new(r: f64, omega: f64, h: f64) -> Self {
        Self { r, omega, h }
    }

    pub fn validate(&self, chain: &ChainParams) -> Result<()> {
        let l = chain.length;
        if !(self.r >= 0.0 && self.r <= l) {
            return Err(KinematicsError::InvalidArgument(format!(
                "attachment radius r must lie in [0, L], got {}",
                self.r
            )));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(KinematicsError::InvalidArgument(format!(
                "omega must be non-negative, got {}",
                self.omega
            )));
        }
        if !(self.h >= 0.0 && self.h <= l) {
            return Err(KinematicsError::InvalidArgument(format!(
                "height h must lie in [0, L], got {}",
                self.h
            )));
        }
        Ok(())
    }

    pub fn lerp(&self, other: &ControlInput, t: f64) -> ControlInput {
        ControlInput {
            r: self.r + (other.r - self.r) * t,
            omega: self.omega + (other.omega - self.omega) * t,
            h: self.h + (other.h - self.h) * t,
        }
    }
}

/// Dimensionless solution `(u, u', ζ)` on a uniform `s̄` grid, where
/// `ζ(s̄) = ∫₀^s̄ z' ds̄` is the accumulated dimensionless height.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionlessShape {
    pub point: ParamPoint,
    pub s_bar: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    pub height: Vec<f64>,
}

impl DimensionlessShape {
    pub fn terminal_slope(&self) -> f64 {
        *self.u_prime.last().expect("non-empty shape")
    }
}

type State = [f64; 3];

fn shape_rhs(s_bar: f64, y: &State, t_bar: f64) -> State {
    let a = s_bar + t_bar;
    let norm = a.hypot(y[0]);
    [y[1], -y[0] / norm, a / norm]
}

fn rk4_step(s: f64, y: &State, h: f64, t_bar: f64) -> State {
    let add = |y: &State, k: &State, f: f64| [y[0] + f * k[0], y[1] + f * k[1], y[2] + f * k[2]];
    let k1 = shape_rhs(s, y, t_bar);
    let k2 = shape_rhs(s + 0.5 * h, &add(y, &k1, 0.5 * h), t_bar);
    let k3 = shape_rhs(s + 0.5 * h, &add(y, &k2, 0.5 * h), t_bar);
    let k4 = shape_rhs(s + h, &add(y, &k3, h), t_bar);
    let mut out = *y;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < MIN_STEPS {
        return Err(KinematicsError::InvalidArgument(format!(
            "integration steps must be at least {MIN_STEPS}, got {steps}"
        )));
    }
    Ok(())
}

/// Integrates the shape equation over `[0, L̄]` with classical RK4 using
/// `steps` equal steps. Returns `steps + 1` samples.
pub fn integrate_shape(point: ParamPoint, steps: usize) -> Result<DimensionlessShape> {
    point.validate()?;
    check_steps(steps)?;
    let h = point.l_bar / steps as f64;
    let mut s_bar = Vec::with_capacity(steps + 1);
    let mut u = Vec::with_capacity(steps + 1);
    let mut u_prime = Vec::with_capacity(steps + 1);
    let mut height = Vec::with_capacity(steps + 1);
    let mut y: State = [point.u0(), 0.0, 0.0];
    for i in 0..=steps {
        let s = if i == steps { point.l_bar } else { i as f64 * h };
        s_bar.push(s);
        u.push(y[0]);
        u_prime.push(y[1]);
        height.push(y[2]);
        if i < steps {
            y = rk4_step(i as f64 * h, &y, h, point.t_bar);
        }
    }
    Ok(DimensionlessShape {
        point,
        s_bar,
        u,
        u_prime,
        height,
    })
}

/// `u'(L̄)` without storing the samples.
pub fn terminal_slope(point: ParamPoint, steps: usize) -> f64 {
    let h = point.l_bar / steps as f64;
    let mut y: State = [point.u0(), 0.0, 0.0];
    for i in 0..steps {
        y = rk4_step(i as f64 * h, &y, h, point.t_bar);
    }
    y[1]
}

/// Physical shape samples along the arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSamples {
    /// Arc length from the pinned end, m.
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    /// Signed radial offset in the plane of the chain, m.
    pub rho: Vec<f64>,
    /// Height, m, anchored so that the driven end sits at zero.
    pub z: Vec<f64>,
    pub rho_prime: Vec<f64>,
    pub z_prime: Vec<f64>,
    /// Chain tension, N.
    pub tension: Vec<f64>,
}

impl ShapeSamples {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Largest violation of `ρ'² + z'² = 1`.
    pub fn inextensibility_error(&self) -> f64 {
        self.rho_prime
            .iter()
            .zip(&self.z_prime)
            .map(|(a, b)| (a * a + b * b - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Tension at arc length `s`, linearly interpolated.
    pub fn tension_at(&self, s: f64) -> f64 {
        let n = self.s.len();
        let s = s.clamp(self.s[0], self.s[n - 1]);
        let i = self.s.partition_point(|&x| x <= s).saturating_sub(1).min(n - 2);
        let t = (s - self.s[i]) / (self.s[i + 1] - self.s[i]);
        self.tension[i] + (self.tension[i + 1] - self.tension[i]) * t
    }

    /// Cubic Hermite interpolation of `(ρ, z)` at arc length `s`.
    pub fn position_at(&self, s: f64) -> (f64, f64) {
        let n = self.s.len();
        let s = s.clamp(self.s[0], self.s[n - 1]);
        let mut i = self.s.partition_point(|&x| x <= s).saturating_sub(1);
        if i >= n - 1 {
            i = n - 2;
        }
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let h = s1 - s0;
        let t = (s - s0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let herm = |p0: f64, m0: f64, p1: f64, m1: f64| h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1;
        let rho = herm(self.rho[i], self.rho_prime[i], self.rho[i + 1], self.rho_prime[i + 1]);
        // z' carries the orientation sign through z itself
        let dz = |k: usize| {
            let sign = if self.z[n - 1] >= self.z[0] { 1.0 } else { -1.0 };
            sign * self.z_prime[k]
        };
        let z = herm(self.z[i], dz(i), self.z[i + 1], dz(i + 1));
        (rho, z)
    }
}

/// A steady rotating configuration `(ω, ρ, T)` with derived data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub point: ParamPoint,
    /// Rotation speed, rad/s.
    pub omega: f64,
    /// Axial component of the bottom constraint force, N.
    pub tension_t: f64,
    pub shape: ShapeSamples,
    pub mode: u32,
    pub control: ControlInput,
}

impl Configuration {
    /// Signed radial offset of the driven end.
    pub fn end_offset(&self) -> f64 {
        *self.shape.rho.last().expect("non-empty shape")
    }
}

/// Maps physical quantities to a point of the parameter cube. Uses `|g|` so
/// both orientations land on the same coordinates.
pub fn to_dimensionless(
    chain: &ChainParams,
    omega: f64,
    tension_t: f64,
    rho_prime_0: f64,
) -> Result<ParamPoint> {
    if !(omega > 0.0) {
        return Err(KinematicsError::NonPositiveOmega(omega));
    }
    if !(tension_t >= 0.0) {
        return Err(KinematicsError::NegativeTension(tension_t));
    }
    if !(0.0..1.0).contains(&rho_prime_0) {
        return Err(KinematicsError::SlopeOutOfRange(rho_prime_0));
    }
    let g = chain.g_abs();
    let w2 = omega * omega;
    Ok(ParamPoint {
        l_bar: chain.length * w2 / g,
        t_bar: tension_t * w2 / (chain.linear_density * g * g),
        c: rho_prime_0,
    })
}

/// Forward map from the parameter cube to configurations, using
/// [`DEFAULT_STEPS`] integration steps.
pub fn forward_map(point: ParamPoint, chain: &ChainParams) -> Result<Configuration> {
    forward_map_steps(point, chain, DEFAULT_STEPS)
}

pub fn forward_map_steps(
    point: ParamPoint,
    chain: &ChainParams,
    steps: usize,
) -> Result<Configuration> {
    chain.validate()?;
    let dimless = integrate_shape(point, steps)?;
    Ok(reconstruct(&dimless, chain))
}

/// Rebuilds the physical configuration from a dimensionless solution.
pub fn reconstruct(dimless: &DimensionlessShape, chain: &ChainParams) -> Configuration {
    let point = dimless.point;
    let g = chain.g_abs();
    let omega = chain.omega_for_l_bar(point.l_bar);
    let w2 = omega * omega;
    let scale = g / w2;
    let tension_t = point.t_bar * chain.linear_density * g * g / w2;
    let up = chain.up();
    let total_height = *dimless.height.last().expect("non-empty shape");

    let n = dimless.s_bar.len();
    let mut shape = ShapeSamples {
        s: Vec::with_capacity(n),
        u: dimless.u.clone(),
        u_prime: dimless.u_prime.clone(),
        rho: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        rho_prime: Vec::with_capacity(n),
        z_prime: Vec::with_capacity(n),
        tension: Vec::with_capacity(n),
    };
    for i in 0..n {
        let sb = dimless.s_bar[i];
        let s = if i + 1 == n { chain.length } else { sb * scale };
        let a = sb + point.t_bar;
        let norm = a.hypot(dimless.u[i]);
        let rho_prime = dimless.u[i] / norm;
        let z_prime = a / norm;
        shape.s.push(s);
        shape.rho.push(-scale * dimless.u_prime[i]);
        shape.z.push(up * scale * (dimless.height[i] - total_height));
        shape.rho_prime.push(rho_prime);
        shape.z_prime.push(z_prime);
        shape
            .tension
            .push((chain.linear_density * g * s + tension_t) / z_prime);
    }
    let mode = mode_or_rest(&dimless.u_prime);
    let r = shape.rho.last().copied().unwrap_or(0.0).abs();
    let h = (shape.z[n - 1] - shape.z[0]).abs();
    Configuration {
        point,
        omega,
        tension_t,
        shape,
        mode,
        control: ControlInput { r, omega, h },
    }
}

/// Control input realized by a configuration.
pub fn extract_control(config: &Configuration) -> ControlInput {
    let n = config.shape.len();
    ControlInput {
        r: config.shape.rho[n - 1].abs(),
        omega: config.omega,
        h: (config.shape.z[n - 1] - config.shape.z[0]).abs(),
    }
}

/// Rotation mode: interior sign changes of `u'` plus one.
///
/// The first and last samples are excluded, and a sign change only counts
/// once `|u'|` has cleared [`MODE_DEAD_BAND`] on both sides.
pub fn classify_mode(u_prime: &[f64]) -> Result<u32> {
    if u_prime.len() < MIN_STEPS {
        return Err(KinematicsError::InvalidArgument(format!(
            "mode classification needs at least {MIN_STEPS} samples, got {}",
            u_prime.len()
        )));
    }
    if u_prime.iter().all(|v| v.abs() <= MODE_DEAD_BAND) {
        return Err(KinematicsError::DegenerateShape);
    }
    let interior = &u_prime[1..u_prime.len() - 1];
    Ok(count_sign_changes(interior, MODE_DEAD_BAND) as u32 + 1)
}

/// Mode with the rest configuration mapped to 1.
pub fn mode_or_rest(u_prime: &[f64]) -> u32 {
    match classify_mode(u_prime) {
        Ok(m) => m,
        Err(_) => 1,
    }
}

/// Sign changes between values whose magnitude exceeds `dead_band`.
pub fn count_sign_changes(values: &[f64], dead_band: f64) -> usize {
    let mut last = 0.0_f64;
    let mut changes = 0;
    for &v in values {
        if v.abs() <= dead_band {
            continue;
        }
        if last != 0.0 && v.signum() != last {
            changes += 1;
        }
        last = v.signum();
    }
    changes
}

/// Settings for [`shoot`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    /// Number of uniform `T̄` samples in `(0, T̄_max]`. The first interval
    /// is further sampled at successive halvings.
    pub scan_resolution: usize,
    pub t_bar_max: f64,
    pub steps: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            scan_resolution: 400,
            t_bar_max: CubeLimits::default().t_bar_max,
            steps: DEFAULT_STEPS,
        }
    }
}

/// Residual `u'(L̄; T̄) - r̄` for fixed `(L̄, c, r̄)`.
pub fn shooting_residual(l_bar: f64, c: f64, r_bar: f64, t_bar: f64, steps: usize) -> f64 {
    terminal_slope(ParamPoint { l_bar, t_bar, c }, steps) - r_bar
}

/// Solves the shape boundary value problem for attachment radius `r`,
/// speed `omega` and bottom slope `c` by shooting on the bottom tension.
///
/// Every sign change of the residual on the scan grid is refined, so the
/// result lists all distinct solutions the grid can resolve, sorted by
/// tension. An empty list means no solution was bracketed.
pub fn shoot(
    r: f64,
    omega: f64,
    c: f64,
    chain: &ChainParams,
    opts: &ShootOptions,
) -> Result<Vec<Configuration>> {
    chain.validate()?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(KinematicsError::InvalidArgument(format!(
            "attachment radius must be non-negative, got {r}"
        )));
    }
    if !(omega > 0.0) {
        return Err(KinematicsError::NonPositiveOmega(omega));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(KinematicsError::SlopeOutOfRange(c));
    }
    if opts.scan_resolution < 2 {
        return Err(KinematicsError::InvalidArgument(
            "scan resolution must be at least 2".into(),
        ));
    }
    check_steps(opts.steps)?;
    if !(opts.t_bar_max > 0.0) {
        return Err(KinematicsError::InvalidArgument(
            "T_bar_max must be positive".into(),
        ));
    }

    let g = chain.g_abs();
    let l_bar = chain.l_bar_for_omega(omega);
    let r_bar = -r * omega * omega / g;
    let residual = |t: f64| shooting_residual(l_bar, c, r_bar, t, opts.steps);

    let n_uniform = opts.scan_resolution;
    let first = opts.t_bar_max / n_uniform as f64;
    // geometric samples below the first uniform one catch roots near T̄ = 0
    let mut grid: Vec<f64> = (1..=LOW_TENSION_SAMPLES).rev().map(|k| first * 0.5f64.powi(k as i32)).collect();
    grid.extend((1..=n_uniform).map(|k| opts.t_bar_max * k as f64 / n_uniform as f64));
    let n = grid.len();
    let values: Vec<f64> = grid.iter().map(|&t| residual(t)).collect();

    let mut roots: Vec<f64> = Vec::new();
    for k in 0..n {
        if values[k] == 0.0 {
            roots.push(grid[k]);
            continue;
        }
        if k + 1 < n && values[k + 1] != 0.0 && values[k].signum() != values[k + 1].signum() {
            let root = refine_root(&residual, grid[k], grid[k + 1], values[k], values[k + 1])?;
            roots.push(root);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= ROOT_SEPARATION);

    roots
        .into_iter()
        .map(|t_bar| forward_map_steps(ParamPoint { l_bar, t_bar, c }, chain, opts.steps))
        .collect()
}

/// Safeguarded Newton iteration inside a sign-change bracket.
fn refine_root<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64, fb: f64) -> Result<f64> {
    debug_assert!(fa.signum() != fb.signum());
    let mut x = if fa.abs() < fb.abs() { a } else { b };
    let mut fx = if fa.abs() < fb.abs() { fa } else { fb };
    for _ in 0..NEWTON_MAX_ITER {
        if fx.abs() <= 1e-13 {
            return Ok(x);
        }
        let step = 1e-7 * x.abs().max(1e-6);
        let xp = if x + step <= b { x + step } else { x - step };
        let slope = (f(xp) - fx) / (xp - x);
        let mut next = x - fx / slope;
        if !next.is_finite() || next <= a || next >= b {
            next = 0.5 * (a + b);
        }
        let fnext = f(next);
        if fnext == 0.0 {
            return Ok(next);
        }
        if fnext.signum() == fa.signum() {
            a = next;
            fa = fnext;
        } else {
            b = next;
        }
        // bisect when Newton stalls
        if fnext.abs() > 0.5 * fx.abs() {
            let mid = 0.5 * (a + b);
            let fmid = f(mid);
            if fmid.signum() == fa.signum() {
                a = mid;
                fa = fmid;
            } else {
                b = mid;
            }
            if fmid.abs() < fnext.abs() {
                x = mid;
                fx = fmid;
                continue;
            }
        }
        x = next;
        fx = fnext;
        if b - a <= f64::EPSILON * b.abs() {
            break;
        }
    }
    if fx.abs() <= SHOOT_TOLERANCE {
        Ok(x)
    } else {
        Err(KinematicsError::NonConvergence {
            t_bar: x,
            iterations: NEWTON_MAX_ITER,
        })
    }
}
