//! Time-domain simulation of the lumped chain in the inertial frame.
//!
//! Node 0 stays pinned at the origin. Node `N` follows the commanded control:
//! it sits at `(r cos θ, r sin θ, ±h)` with `θ̇ = ω`. Interior nodes feel
//! spring links, axial damping, gravity and drag against still air.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{count_sign_changes, ChainParams, ControlInput};
use crate::planner::ControlTrajectory;
use crate::stability::{drag_force, link_force, LumpedModelParams, LumpedState};

/// Node speed treated as numerical blow-up, m/s.
pub const BLOW_UP_SPEED: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation blew up at t = {time:.6} s (node speed above {BLOW_UP_SPEED} m/s)")]
    BlowUp { time: f64 },
    #[error("mode window is not steady (radial spread {spread:.3} of mean amplitude)")]
    NotSteady { spread: f64 },
    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

/// Time integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Velocities from forces, then positions from the new velocities.
    #[default]
    SemiImplicit,
    Rk4,
}

/// Simulator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Step size, s. `None` picks `0.05 / ω_spring`.
    pub dt: Option<f64>,
    pub integrator: Integrator,
    /// Extra time held at the terminal control, s.
    pub settle: f64,
    /// Output sampling rate, Hz.
    pub sample_rate: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: None,
            integrator: Integrator::SemiImplicit,
            settle: 3.0,
            sample_rate: 100.0,
        }
    }
}

/// Highest link vibration frequency `sqrt(2kN/(μL))`, rad/s.
pub fn spring_frequency(model: &LumpedModelParams, chain: &ChainParams) -> f64 {
    (2.0 * model.stiffness * model.link_count as f64 / chain.total_mass()).sqrt()
}

/// Default step `0.05 / ω_spring`.
pub fn default_dt(model: &LumpedModelParams, chain: &ChainParams) -> f64 {
    0.05 / spring_frequency(model, chain)
}

/// Full chain state in the inertial frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    /// Accumulated attachment phase, rad.
    pub theta: f64,
    /// Time, s.
    pub t: f64,
    /// Rest length of each link, m.
    pub rest: Vec<f64>,
}

impl SimState {
    pub fn link_count(&self) -> usize {
        self.positions.len() - 1
    }

    /// Straight chain from the pin to the attachment point of `control` at
    /// phase zero, every node at rest, uniform rest lengths `L/N`.
    pub fn straight(control: &ControlInput, model: &LumpedModelParams, chain: &ChainParams) -> Self {
        let n = model.link_count;
        let top = attachment(control, 0.0, chain);
        let positions = (0..=n).map(|i| top * (i as f64 / n as f64)).collect();
        SimState {
            positions,
            velocities: vec![Vector3::zeros(); n + 1],
            theta: 0.0,
            t: 0.0,
            rest: vec![model.rest_length(chain); n],
        }
    }

    /// Places a rotating-frame state in the inertial frame. The phase is
    /// the azimuth of the driven end, so a shape whose end sits at negative
    /// `x` starts at `θ = π`. Inertial velocities pick up `ω ẑ × x`.
    pub fn from_rotating(state: &LumpedState, omega: f64) -> Self {
        let positions = state.positions();
        let velocities = (0..positions.len())
            .map(|i| {
                let x = positions[i];
                state.velocity(i) + Vector3::new(-x.y, x.x, 0.0) * omega
            })
            .collect();
        SimState {
            positions,
            velocities,
            theta: azimuth(&state.top),
            t: 0.0,
            rest: state.rest.clone(),
        }
    }

    /// Node positions expressed in the frame aligned with the attachment.
    pub fn rotating_positions(&self) -> Vec<Vector3<f64>> {
        let (s, c) = self.theta.sin_cos();
        self.positions
            .iter()
            .map(|p| Vector3::new(c * p.x + s * p.y, -s * p.x + c * p.y, p.z))
            .collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Kinetic plus spring plus gravitational energy of the interior nodes, J.
    pub fn mechanical_energy(&self, model: &LumpedModelParams, chain: &ChainParams) -> f64 {
        let m = model.node_mass(chain);
        let n = self.link_count();
        let mut e = 0.0;
        for i in 1..n {
            e += 0.5 * m * self.velocities[i].norm_squared() - m * chain.gravity * self.positions[i].z;
        }
        for j in 0..n {
            let stretch = (self.positions[j + 1] - self.positions[j]).norm() - self.rest[j];
            e += 0.5 * model.stiffness * stretch * stretch;
        }
        e
    }
}

/// Azimuth of `x` about the z axis, zero on the axis.
fn azimuth(x: &Vector3<f64>) -> f64 {
    if x.x == 0.0 && x.y == 0.0 {
        0.0
    } else {
        x.y.atan2(x.x)
    }
}

fn attachment(control: &ControlInput, theta: f64, chain: &ChainParams) -> Vector3<f64> {
    let (s, c) = theta.sin_cos();
    Vector3::new(control.r * c, control.r * s, chain.up() * control.h)
}

fn accelerations(
    positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
    rest: &[f64],
    model: &LumpedModelParams,
    chain: &ChainParams,
    out: &mut [Vector3<f64>],
) {
    let n = positions.len() - 1;
    let m = model.node_mass(chain);
    let gravity = Vector3::new(0.0, 0.0, chain.gravity);
    for i in 1..n {
        let (x, v) = (&positions[i], &velocities[i]);
        let mut f = link_force(x, &positions[i - 1], v, &velocities[i - 1], model.stiffness, model.damping, rest[i - 1]);
        f += link_force(x, &positions[i + 1], v, &velocities[i + 1], model.stiffness, model.damping, rest[i]);
        f += drag_force(v, model.drag_linear, model.drag_quadratic);
        out[i] = f / m + gravity;
    }
}

/// Source of the commanded control at a given time.
pub trait ControlSource {
    fn control_at(&self, t: f64) -> ControlInput;
}

impl ControlSource for ControlInput {
    fn control_at(&self, _t: f64) -> ControlInput {
        *self
    }
}

impl ControlSource for ControlTrajectory {
    fn control_at(&self, t: f64) -> ControlInput {
        self.sample(t)
    }
}

/// Advances `state` by `dt` under `command`.
pub fn step(
    state: &SimState,
    command: &dyn ControlSource,
    dt: f64,
    model: &LumpedModelParams,
    chain: &ChainParams,
    integrator: Integrator,
) -> Result<SimState> {
    let mut next = state.clone();
    let mut scratch = vec![Vector3::zeros(); state.positions.len()];
    step_in_place(&mut next, command, dt, model, chain, integrator, &mut scratch)?;
    Ok(next)
}

fn boundary(command: &dyn ControlSource, t: f64, theta: f64, chain: &ChainParams) -> Vector3<f64> {
    attachment(&command.control_at(t), theta, chain)
}

fn step_in_place(
    state: &mut SimState,
    command: &dyn ControlSource,
    dt: f64,
    model: &LumpedModelParams,
    chain: &ChainParams,
    integrator: Integrator,
    acc: &mut [Vector3<f64>],
) -> Result<()> {
    let n = state.link_count();
    let t0 = state.t;
    let t1 = t0 + dt;
    let omega0 = command.control_at(t0).omega;
    let omega1 = command.control_at(t1).omega;
    let theta1 = state.theta + 0.5 * dt * (omega0 + omega1);
    let top1 = boundary(command, t1, theta1, chain);

    match integrator {
        Integrator::SemiImplicit => {
            accelerations(&state.positions, &state.velocities, &state.rest, model, chain, acc);
            for i in 1..n {
                state.velocities[i] += acc[i] * dt;
                let v = state.velocities[i];
                state.positions[i] += v * dt;
            }
        }
        Integrator::Rk4 => rk4_interior(state, command, dt, theta1, model, chain),
    }
    state.velocities[n] = (top1 - state.positions[n]) / dt;
    state.positions[n] = top1;
    state.theta = theta1;
    state.t = t1;
    for i in 1..=n {
        if !(state.velocities[i].norm() <= BLOW_UP_SPEED) {
            return Err(SimError::BlowUp { time: t1 });
        }
    }
    Ok(())
}

fn rk4_interior(
    state: &mut SimState,
    command: &dyn ControlSource,
    dt: f64,
    theta1: f64,
    model: &LumpedModelParams,
    chain: &ChainParams,
) {
    let n = state.link_count();
    let t0 = state.t;
    let theta0 = state.theta;
    let top0 = state.positions[n];
    let top_half = boundary(command, t0 + 0.5 * dt, 0.5 * (theta0 + theta1), chain);
    let top1 = boundary(command, t0 + dt, theta1, chain);
    let top_vel = (top1 - top0) / dt;

    let eval = |pos: &[Vector3<f64>], vel: &[Vector3<f64>]| {
        let mut a = vec![Vector3::zeros(); n + 1];
        accelerations(pos, vel, &state.rest, model, chain, &mut a);
        a
    };
    let with = |base: &[Vector3<f64>], d: &[Vector3<f64>], h: f64, top: Vector3<f64>| {
        let mut out = base.to_vec();
        for i in 1..n {
            out[i] += d[i] * h;
        }
        out[n] = top;
        out
    };

    let x0 = state.positions.clone();
    let mut v0 = state.velocities.clone();
    v0[n] = top_vel;
    let k1x = v0.clone();
    let k1v = eval(&x0, &v0);
    let x2 = with(&x0, &k1x, 0.5 * dt, top_half);
    let v2 = with(&v0, &k1v, 0.5 * dt, top_vel);
    let k2v = eval(&x2, &v2);
    let x3 = with(&x0, &v2, 0.5 * dt, top_half);
    let v3 = with(&v0, &k2v, 0.5 * dt, top_vel);
    let k3v = eval(&x3, &v3);
    let x4 = with(&x0, &v3, dt, top1);
    let v4 = with(&v0, &k3v, dt, top_vel);
    let k4v = eval(&x4, &v4);
    for i in 1..n {
        state.positions[i] = x0[i] + (k1x[i] + v2[i] * 2.0 + v3[i] * 2.0 + v4[i]) * (dt / 6.0);
        state.velocities[i] = v0[i] + (k1v[i] + k2v[i] * 2.0 + k3v[i] * 2.0 + k4v[i]) * (dt / 6.0);
    }
}

/// One recorded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSample {
    pub t: f64,
    pub theta: f64,
    pub control: ControlInput,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
}

impl SimSample {
    /// Signed radial coordinate of every node along the attachment direction.
    pub fn radial_profile(&self) -> Vec<f64> {
        let (s, c) = self.theta.sin_cos();
        self.positions.iter().map(|p| c * p.x + s * p.y).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub samples: Vec<SimSample>,
}

impl SimTrace {
    pub fn duration(&self) -> f64 {
        self.samples.last().map(|s| s.t).unwrap_or(0.0)
    }

    /// Samples with `t` in `[start, end]`.
    pub fn window(&self, start: f64, end: f64) -> &[SimSample] {
        let a = self.samples.partition_point(|s| s.t < start);
        let b = self.samples.partition_point(|s| s.t <= end);
        &self.samples[a..b]
    }

    /// Shortest trailing window covering at least `revolutions` turns at
    /// speed `omega`, or the whole trace when it is shorter.
    pub fn tail(&self, revolutions: f64, omega: f64) -> &[SimSample] {
        let span = revolutions * std::f64::consts::TAU / omega.max(1e-9);
        let end = self.duration();
        let start = self.samples.partition_point(|s| s.t <= end - span).saturating_sub(1);
        &self.samples[start..]
    }
}

fn record(state: &SimState, command: &dyn ControlSource) -> SimSample {
    SimSample {
        t: state.t,
        theta: state.theta,
        control: command.control_at(state.t),
        positions: state.positions.clone(),
        velocities: state.velocities.clone(),
    }
}

/// Integrates from `initial` for `duration` seconds under `command`.
pub fn simulate(
    command: &dyn ControlSource,
    duration: f64,
    model: &LumpedModelParams,
    chain: &ChainParams,
    initial: &SimState,
    opts: &SimOptions,
) -> Result<SimTrace> {
    if initial.positions.len() != model.link_count + 1 || initial.rest.len() != model.link_count {
        return Err(SimError::InvalidInput("initial state does not match the link count".into()));
    }
    if !(duration >= 0.0) || !(opts.sample_rate > 0.0) {
        return Err(SimError::InvalidInput("duration and sample rate must be positive".into()));
    }
    let dt = opts.dt.unwrap_or_else(|| default_dt(model, chain));
    if !(dt > 0.0) {
        return Err(SimError::InvalidInput("time step must be positive".into()));
    }
    let mut state = initial.clone();
    let start = state.t;
    let end = start + duration;
    let sample_period = 1.0 / opts.sample_rate;
    let mut trace = SimTrace::default();
    trace.samples.push(record(&state, command));
    let mut next_sample = 1usize;
    let mut scratch = vec![Vector3::zeros(); state.positions.len()];
    while state.t < end - 1e-12 {
        let h = dt.min(end - state.t);
        step_in_place(&mut state, command, h, model, chain, opts.integrator, &mut scratch)?;
        let target = start + next_sample as f64 * sample_period;
        if state.t >= target - 1e-9 {
            trace.samples.push(record(&state, command));
            next_sample += 1;
        }
    }
    if trace.samples.last().map(|s| s.t) != Some(state.t) {
        trace.samples.push(record(&state, command));
    }
    Ok(trace)
}

/// Runs a planned trajectory plus the settle window from `initial`.
pub fn run(
    trajectory: &ControlTrajectory,
    model: &LumpedModelParams,
    chain: &ChainParams,
    initial: &SimState,
    opts: &SimOptions,
) -> Result<SimTrace> {
    trajectory
        .validate()
        .map_err(|e| SimError::InvalidInput(e.to_string()))?;
    simulate(trajectory, trajectory.duration() + opts.settle, model, chain, initial, opts)
}

/// Settings for [`measure_mode`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMeasureOptions {
    /// Sign-change dead band as a fraction of the largest mean radial offset.
    pub dead_band: f64,
    /// Largest accepted RMS spread of the radial profile over the window,
    /// as a fraction of the mean amplitude.
    pub max_spread: f64,
    /// Revolutions spanned by the measurement window.
    pub revolutions: f64,
}

impl Default for ModeMeasureOptions {
    fn default() -> Self {
        Self {
            dead_band: 0.02,
            max_spread: 0.2,
            revolutions: 2.0,
        }
    }
}

/// Outcome of a mode measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: u32,
    pub confidence: f64,
    pub steady: bool,
}

/// Absolute radial offset under which a chain counts as lying on the axis, m.
const ON_AXIS: f64 = 1e-9;

fn profile_mode(profile: &[f64], dead_band: f64) -> u32 {
    let interior = &profile[1..profile.len() - 1];
    count_sign_changes(interior, dead_band) as u32 + 1
}

/// Rotation mode read off a window of samples.
///
/// The radial profile along the attachment direction is averaged over the
/// window; interior sign changes beyond the dead band, plus one, give the
/// mode. Confidence is the share of individual samples whose own profile
/// yields the same mode.
pub fn measure_mode(window: &[SimSample], omega: f64, opts: &ModeMeasureOptions) -> Result<ModeReport> {
    if window.len() < 2 {
        return Err(SimError::InvalidInput("mode window needs at least two samples".into()));
    }
    let span = window[window.len() - 1].t - window[0].t;
    if omega > 0.0 && span * omega < opts.revolutions * std::f64::consts::TAU * (1.0 - 1e-6) {
        return Err(SimError::InvalidInput(format!(
            "mode window spans {:.2} revolutions, need {}",
            span * omega / std::f64::consts::TAU,
            opts.revolutions
        )));
    }
    let profiles: Vec<Vec<f64>> = window.iter().map(|s| s.radial_profile()).collect();
    let nodes = profiles[0].len();
    let count = profiles.len() as f64;
    let mean: Vec<f64> = (0..nodes)
        .map(|i| profiles.iter().map(|p| p[i]).sum::<f64>() / count)
        .collect();
    let amplitude = mean.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if amplitude <= ON_AXIS {
        return Ok(ModeReport {
            mode: 1,
            confidence: 1.0,
            steady: true,
        });
    }
    let variance = (0..nodes)
        .map(|i| profiles.iter().map(|p| (p[i] - mean[i]).powi(2)).sum::<f64>() / count)
        .sum::<f64>()
        / nodes as f64;
    let mean_amplitude = mean.iter().map(|v| v.abs()).sum::<f64>() / nodes as f64;
    let spread = variance.sqrt() / mean_amplitude;
    if spread > opts.max_spread {
        return Err(SimError::NotSteady { spread });
    }
    let band = opts.dead_band * amplitude;
    let mode = profile_mode(&mean, band);
    let agreeing = profiles.iter().filter(|p| profile_mode(p, band) == mode).count();
    Ok(ModeReport {
        mode,
        confidence: agreeing as f64 / count,
        steady: true,
    })
}

/// Measures the mode over the trailing window of a trace.
pub fn measure_terminal_mode(trace: &SimTrace, opts: &ModeMeasureOptions) -> Result<ModeReport> {
    let last = trace
        .samples
        .last()
        .ok_or_else(|| SimError::InvalidInput("empty trace".into()))?;
    let omega = last.control.omega;
    measure_mode(trace.tail(opts.revolutions, omega), omega, opts)
}

/// Displaces every interior node by `amplitude` metres in a uniformly
/// random direction.
pub fn perturb<R: Rng + ?Sized>(state: &SimState, amplitude: f64, rng: &mut R) -> SimState {
    let mut out = state.clone();
    let n = out.link_count();
    for p in &mut out.positions[1..n] {
        let dir = loop {
            let v = Vector3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            );
            let norm = v.norm();
            if norm > 1e-3 && norm <= 1.0 {
                break v / norm;
            }
        };
        *p += dir * amplitude;
    }
    out
}

/// Distance history of a run from a rotating-frame equilibrium.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerturbationResponse {
    pub times: Vec<f64>,
    /// Largest node distance from the equilibrium at each sample, m.
    pub deviation: Vec<f64>,
}

impl PerturbationResponse {
    /// Compares every sample, rotated back by its attachment phase, with
    /// `equilibrium`.
    pub fn measure(trace: &SimTrace, equilibrium: &LumpedState) -> Self {
        let reference = equilibrium.positions();
        let phase = azimuth(&equilibrium.top);
        let mut out = Self::default();
        for sample in &trace.samples {
            let (s, c) = (sample.theta - phase).sin_cos();
            let d = sample
                .positions
                .iter()
                .zip(&reference)
                .map(|(p, q)| (Vector3::new(c * p.x + s * p.y, -s * p.x + c * p.y, p.z) - q).norm())
                .fold(0.0, f64::max);
            out.times.push(sample.t);
            out.deviation.push(d);
        }
        out
    }

    /// Peak deviation over consecutive windows of length `window`, stamped
    /// at each window's midpoint.
    pub fn envelope(&self, window: f64) -> Vec<(f64, f64)> {
        let Some(&start) = self.times.first() else {
            return Vec::new();
        };
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut bucket = 0usize;
        let mut peak = 0.0f64;
        for (&t, &d) in self.times.iter().zip(&self.deviation) {
            let b = ((t - start) / window).floor() as usize;
            if b != bucket {
                out.push((start + (bucket as f64 + 0.5) * window, peak));
                bucket = b;
                peak = 0.0;
            }
            peak = peak.max(d);
        }
        out.push((start + (bucket as f64 + 0.5) * window, peak));
        out
    }

    /// Least-squares slope of `ln(envelope)`, 1/s.
    pub fn rate(&self, window: f64) -> f64 {
        let env: Vec<(f64, f64)> = self.envelope(window).into_iter().filter(|(_, d)| *d > 0.0).collect();
        let n = env.len() as f64;
        let mt = env.iter().map(|e| e.0).sum::<f64>() / n;
        let ml = env.iter().map(|e| e.1.ln()).sum::<f64>() / n;
        let num: f64 = env.iter().map(|e| (e.0 - mt) * (e.1.ln() - ml)).sum();
        let den: f64 = env.iter().map(|e| (e.0 - mt).powi(2)).sum();
        num / den
    }
}
