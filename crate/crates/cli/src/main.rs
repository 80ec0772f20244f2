//! `rchain`: shapes, stability maps, transition plans and simulations of a
//! chain spun about a vertical axis with its bottom end pinned.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rotating_chain::kinematics::Orientation;
use rotating_chain::simulator::Integrator;

use config::RunConfig;

/// Rotation modes count interior crossings of the rotation axis plus one.
const MODE_CONVENTION: &str = "mode = interior axis crossings + 1";

#[derive(Debug, Parser)]
#[command(name = "rchain", version, about, after_help = MODE_CONVENTION)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML run configuration. Flags override values from the file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Direction of gravity relative to the pinned end.
    #[arg(long, global = true, value_enum)]
    gravity: Option<GravityArg>,
    /// Seed for random perturbations.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GravityArg {
    /// Pinned end below the driven end.
    General,
    /// Gravity reversed: pinned end above the driven end.
    Yarn,
}

impl From<GravityArg> for Orientation {
    fn from(g: GravityArg) -> Self {
        match g {
            GravityArg::General => Orientation::General,
            GravityArg::Yarn => Orientation::Yarn,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IntegratorArg {
    /// Symplectic Euler: velocities first, then positions.
    SemiImplicit,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
}

impl From<IntegratorArg> for Integrator {
    fn from(i: IntegratorArg) -> Self {
        match i {
            IntegratorArg::SemiImplicit => Integrator::SemiImplicit,
            IntegratorArg::Rk4 => Integrator::Rk4,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve steady shapes. Writes shape CSV and summary JSON.
    #[command(after_help = MODE_CONVENTION)]
    Solve(SolveArgs),
    /// Sweep the stability of equilibria over a grid. Writes map.csv and map.meta.json.
    Map(MapArgs),
    /// Plan a stable mode transition. Writes plan.json and trajectory.csv.
    Plan(PlanArgs),
    /// Simulate a control trajectory. Writes trace.csv and mode.json.
    #[command(after_help = MODE_CONVENTION)]
    Simulate(SimulateArgs),
    /// Classify the rotation mode of a shape CSV.
    #[command(after_help = MODE_CONVENTION)]
    Modes(ModesArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["param", "control"]))]
struct SolveArgs {
    /// Dimensionless point L_bar,T_bar,c (all unitless; L_bar > 0, T_bar >= 0, 0 <= c < 1).
    #[arg(long, value_name = "L_BAR,T_BAR,C", value_parser = parse_triple)]
    param: Option<[f64; 3]>,
    /// Attachment radius r (m) and spin rate omega (rad/s). Requires --c.
    #[arg(long, value_name = "R,OMEGA", value_parser = parse_pair, requires = "c")]
    control: Option<[f64; 2]>,
    /// Bottom slope c = rho'(0), unitless, 0 < c < 1.
    #[arg(long, requires = "control")]
    c: Option<f64>,
    /// RK4 steps along the chain. 10 reproduces the coarse original setting.
    #[arg(long, default_value_t = rotating_chain::kinematics::DEFAULT_STEPS)]
    steps: usize,
}

#[derive(Debug, Args)]
struct MapArgs {
    /// Samples per free axis (>= 2). Overrides the config grid.
    #[arg(long)]
    resolution: Option<usize>,
    /// L_bar bounds, unitless.
    #[arg(long, value_name = "MIN,MAX", value_parser = parse_pair)]
    l_bar: Option<[f64; 2]>,
    /// T_bar bounds, unitless.
    #[arg(long, value_name = "MIN,MAX", value_parser = parse_pair)]
    t_bar: Option<[f64; 2]>,
    /// Bottom slope bounds, unitless.
    #[arg(long, value_name = "MIN,MAX", value_parser = parse_pair)]
    c: Option<[f64; 2]>,
    /// Fix one axis, e.g. T_bar=1.0 (axes: L_bar, T_bar, c).
    #[arg(long, value_name = "AXIS=VALUE", value_parser = parse_slice)]
    slice: Option<(Axis, f64)>,
    /// Worker threads for grid points.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    LBar,
    TBar,
    C,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["goal_mode", "goal"]))]
struct PlanArgs {
    /// Stability map CSV with its .meta.json sidecar. Defaults to OUT/map.csv.
    #[arg(long, value_name = "FILE")]
    map: Option<PathBuf>,
    /// Start vertex L_bar,T_bar,c (unitless). Defaults to the rest vertex.
    #[arg(long, value_name = "L_BAR,T_BAR,C", value_parser = parse_triple)]
    start: Option<[f64; 3]>,
    /// Goal: any vertex of rotation mode K.
    #[arg(long, value_name = "K")]
    goal_mode: Option<u32>,
    /// Goal: the vertex at L_bar,T_bar,c (unitless).
    #[arg(long, value_name = "L_BAR,T_BAR,C", value_parser = parse_triple)]
    goal: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Control trajectory CSV with columns t (s), r (m), omega (rad/s), h (m).
    #[arg(long, value_name = "FILE")]
    trajectory: PathBuf,
    /// Integration step, s. Defaults to 0.05 over the fastest link frequency.
    #[arg(long)]
    dt: Option<f64>,
    /// Time integration scheme.
    #[arg(long, value_enum)]
    integrator: Option<IntegratorArg>,
    /// Hold time at the final control before measuring, s. Extended to cover the measurement window.
    #[arg(long)]
    settle: Option<f64>,
    /// Random displacement of every interior node at t = 0, m.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
}

#[derive(Debug, Args)]
struct ModesArgs {
    /// Shape CSV with columns s,u,u_prime,rho,z,F.
    #[arg(long, value_name = "FILE")]
    shape: PathBuf,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got {:?}", s));
    }
    let mut out = [0.0; N];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("{p:?} is not a number"))?;
    }
    Ok(out)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_floats(s)
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    parse_floats(s)
}

fn parse_slice(s: &str) -> Result<(Axis, f64), String> {
    let (axis, value) = s.split_once('=').ok_or("expected AXIS=VALUE")?;
    let axis = match axis.trim() {
        "L_bar" | "l_bar" => Axis::LBar,
        "T_bar" | "t_bar" => Axis::TBar,
        "c" => Axis::C,
        other => return Err(format!("unknown axis {other:?}; use L_bar, T_bar or c")),
    };
    let value = value.trim().parse().map_err(|_| format!("{value:?} is not a number"))?;
    Ok((axis, value))
}

/// Command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    /// Invalid input or a model error.
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    /// Valid input with nothing to show for it.
    pub fn empty(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &global.out {
        cfg.output_dir = out.clone();
    }
    if let Some(g) = global.gravity {
        cfg.chain.orientation = g.into();
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(Failure::usage)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.global).and_then(|cfg| match cli.command {
        Command::Solve(args) => commands::solve(&cfg, &args),
        Command::Map(args) => commands::map(cfg, &args),
        Command::Plan(args) => commands::plan(&cfg, &args),
        Command::Simulate(args) => commands::simulate(cfg, &args),
        Command::Modes(args) => commands::modes(&args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn tuples_parse() {
        assert_eq!(parse_triple("1, 2.5,0").unwrap(), [1.0, 2.5, 0.0]);
        assert!(parse_pair("1,2,3").is_err());
        assert!(parse_pair("1,x").is_err());
        assert_eq!(parse_slice("T_bar=1.5").unwrap(), (Axis::TBar, 1.5));
        assert!(parse_slice("omega=2").is_err());
    }
}
