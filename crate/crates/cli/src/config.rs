//! Run configuration file.

use std::path::{Path, PathBuf};

use rotating_chain::kinematics::{ChainParams, Orientation};
use rotating_chain::planner::{Condition1Scope, EdgeParams, RobotLimits};
use rotating_chain::simulator::{Integrator, ModeMeasureOptions, SimOptions};
use rotating_chain::stability::{AxisRange, GridSpec, LumpedModelParams};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    /// m.
    pub length: f64,
    /// kg/m.
    pub linear_density: f64,
    /// Magnitude of gravity, m/s².
    pub gravity: f64,
    pub orientation: Orientation,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            length: 0.5,
            linear_density: 0.1,
            gravity: 9.81,
            orientation: Orientation::General,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub link_count: usize,
    /// N/m.
    pub stiffness: f64,
    /// N·s/m.
    pub damping: f64,
    /// N·s/m.
    pub drag_linear: f64,
    /// kg/m.
    pub drag_quadratic: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self::from(LumpedModelParams::default())
    }
}

impl From<LumpedModelParams> for ModelSection {
    fn from(m: LumpedModelParams) -> Self {
        Self {
            link_count: m.link_count,
            stiffness: m.stiffness,
            damping: m.damping,
            drag_linear: m.drag_linear,
            drag_quadratic: m.drag_quadratic,
        }
    }
}

impl From<&ModelSection> for LumpedModelParams {
    fn from(m: &ModelSection) -> Self {
        Self {
            link_count: m.link_count,
            stiffness: m.stiffness,
            damping: m.damping,
            drag_linear: m.drag_linear,
            drag_quadratic: m.drag_quadratic,
        }
    }
}

/// Robot envelope. The defaults describe a tabletop arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    /// m.
    pub r_range: [f64; 2],
    /// rad/s.
    pub omega_range: [f64; 2],
    /// m.
    pub h_range: [f64; 2],
    /// m/s.
    pub r_dot_max: f64,
    /// rad/s².
    pub omega_dot_max: f64,
    /// m/s.
    pub h_dot_max: f64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        let b = RobotLimits::bench();
        Self {
            r_range: b.r_range,
            omega_range: b.omega_range,
            h_range: b.h_range,
            r_dot_max: b.r_dot_max,
            omega_dot_max: b.omega_dot_max,
            h_dot_max: b.h_dot_max,
        }
    }
}

impl From<&LimitsSection> for RobotLimits {
    fn from(l: &LimitsSection) -> Self {
        Self {
            r_range: l.r_range,
            omega_range: l.omega_range,
            h_range: l.h_range,
            r_dot_max: l.r_dot_max,
            omega_dot_max: l.omega_dot_max,
            h_dot_max: l.h_dot_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub k_min: f64,
    pub k_max: f64,
    /// 1/s.
    pub lambda_path: f64,
    /// 1/s.
    pub lambda_node: f64,
    pub samples: usize,
    pub condition1_scope: Condition1Scope,
    pub max_hop: usize,
    pub require_arrival: bool,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let p = EdgeParams::default();
        Self {
            k_min: p.k_min,
            k_max: p.k_max,
            lambda_path: p.lambda_path,
            lambda_node: p.lambda_node,
            samples: p.samples,
            condition1_scope: p.condition1_scope,
            max_hop: p.max_hop,
            require_arrival: p.require_arrival,
        }
    }
}

impl From<&PlannerSection> for EdgeParams {
    fn from(p: &PlannerSection) -> Self {
        Self {
            k_min: p.k_min,
            k_max: p.k_max,
            lambda_path: p.lambda_path,
            lambda_node: p.lambda_node,
            samples: p.samples,
            condition1_scope: p.condition1_scope,
            max_hop: p.max_hop,
            require_arrival: p.require_arrival,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubeSection {
    pub l_bar: [f64; 2],
    pub t_bar: [f64; 2],
    pub c: [f64; 2],
}

impl Default for CubeSection {
    fn default() -> Self {
        Self {
            l_bar: [1.0, 25.0],
            t_bar: [0.5, 4.5],
            c: [0.1, 0.9],
        }
    }
}

/// Samples per cube axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub l_bar: usize,
    pub t_bar: usize,
    pub c: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            l_bar: 13,
            t_bar: 5,
            c: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorSection {
    /// s; absent means `0.05 / ω_spring`.
    pub dt: Option<f64>,
    pub integrator: Integrator,
    /// s.
    pub settle: f64,
    /// Hz.
    pub sample_rate: f64,
    pub dead_band: f64,
    pub max_spread: f64,
    pub revolutions: f64,
}

impl Default for SimulatorSection {
    fn default() -> Self {
        let sim = SimOptions::default();
        let mode = ModeMeasureOptions::default();
        Self {
            dt: sim.dt,
            integrator: sim.integrator,
            settle: sim.settle,
            sample_rate: sim.sample_rate,
            dead_band: mode.dead_band,
            max_spread: mode.max_spread,
            revolutions: mode.revolutions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub chain: ChainSection,
    pub model: ModelSection,
    pub limits: LimitsSection,
    pub cube: CubeSection,
    pub grid: GridSection,
    pub planner: PlannerSection,
    pub simulator: SimulatorSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("."),
            seed: 0,
            chain: ChainSection::default(),
            model: ModelSection::default(),
            limits: LimitsSection::default(),
            cube: CubeSection::default(),
            grid: GridSection::default(),
            planner: PlannerSection::default(),
            simulator: SimulatorSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.message().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.chain_params()?;
        self.model().validate().map_err(|e| e.to_string())?;
        self.limits().validate().map_err(|e| e.to_string())?;
        self.edge_params().validate().map_err(|e| e.to_string())?;
        self.grid_spec().validate().map_err(|e| e.to_string())?;
        let sim = &self.simulator;
        if let Some(dt) = sim.dt {
            if !(dt > 0.0) {
                return Err("simulator.dt must be positive".into());
            }
        }
        if !(sim.settle >= 0.0) || !(sim.sample_rate > 0.0) {
            return Err("simulator.settle must be non-negative and sample_rate positive".into());
        }
        if !(sim.dead_band >= 0.0 && sim.max_spread > 0.0 && sim.revolutions > 0.0) {
            return Err("simulator mode window settings must be positive".into());
        }
        Ok(())
    }

    pub fn chain_params(&self) -> Result<ChainParams, String> {
        let c = &self.chain;
        if !(c.gravity > 0.0) {
            return Err("chain.gravity is a magnitude and must be positive".into());
        }
        ChainParams::new(c.length, c.linear_density, -c.gravity)
            .map(|p| p.with_orientation(c.orientation))
            .map_err(|e| e.to_string())
    }

    pub fn model(&self) -> LumpedModelParams {
        (&self.model).into()
    }

    pub fn limits(&self) -> RobotLimits {
        (&self.limits).into()
    }

    pub fn edge_params(&self) -> EdgeParams {
        (&self.planner).into()
    }

    pub fn grid_spec(&self) -> GridSpec {
        let axis = |[lo, hi]: [f64; 2], n: usize| AxisRange::new(lo, hi, n);
        GridSpec {
            l_bar: axis(self.cube.l_bar, self.grid.l_bar),
            t_bar: axis(self.cube.t_bar, self.grid.t_bar),
            c: axis(self.cube.c, self.grid.c),
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        let s = &self.simulator;
        SimOptions {
            dt: s.dt,
            integrator: s.integrator,
            settle: s.settle,
            sample_rate: s.sample_rate,
        }
    }

    pub fn mode_options(&self) -> ModeMeasureOptions {
        let s = &self.simulator;
        ModeMeasureOptions {
            dead_band: s.dead_band,
            max_spread: s.max_spread,
            revolutions: s.revolutions,
        }
    }
}
