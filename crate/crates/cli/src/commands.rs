use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rotating_chain::io::{self, ConfigSummary, ShapeTable};
use rotating_chain::kinematics::{
    classify_mode, forward_map_steps, shoot, Configuration, KinematicsError, ParamPoint, ShootOptions,
};
use rotating_chain::planner::{build_graph, plan as search, synthesize_trajectory, Goal, Graph, PlannerError};
use rotating_chain::simulator::{measure_terminal_mode, perturb, run, SimError, SimState};
use rotating_chain::stability::{stability_grid, AxisRange, StabilityMap};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{Axis, Failure, MapArgs, ModesArgs, PlanArgs, SimulateArgs, SolveArgs, MODE_CONVENTION};

fn io_failure(e: io::IoError) -> Failure {
    Failure::usage(e.to_string())
}

fn write_configuration(cfg: &RunConfig, config: &Configuration, suffix: &str) -> Result<(), Failure> {
    let shape_path = cfg.output_dir.join(format!("shape{suffix}.csv"));
    let summary_path = cfg.output_dir.join(format!("summary{suffix}.json"));
    io::save_shape(&shape_path, &ShapeTable::from(&config.shape)).map_err(io_failure)?;
    io::save_json(&summary_path, &ConfigSummary::from(config)).map_err(io_failure)?;
    println!(
        "L_bar={:.6} T_bar={:.6} c={:.6} mode={} r={:.6} m omega={:.6} rad/s h={:.6} m -> {}",
        config.point.l_bar,
        config.point.t_bar,
        config.point.c,
        config.mode,
        config.control.r,
        config.omega,
        config.control.h,
        shape_path.display()
    );
    Ok(())
}

pub fn solve(cfg: &RunConfig, args: &SolveArgs) -> Result<(), Failure> {
    let chain = cfg.chain_params().map_err(Failure::usage)?;
    let kin = |e: KinematicsError| Failure::usage(e.to_string());
    if let Some([l_bar, t_bar, c]) = args.param {
        let point = ParamPoint::new(l_bar, t_bar, c).map_err(kin)?;
        let config = forward_map_steps(point, &chain, args.steps).map_err(kin)?;
        write_configuration(cfg, &config, "")?;
    } else if let (Some([r, omega]), Some(c)) = (args.control, args.c) {
        let opts = ShootOptions {
            steps: args.steps,
            ..ShootOptions::default()
        };
        let roots = shoot(r, omega, c, &chain, &opts).map_err(kin)?;
        if roots.is_empty() {
            return Err(Failure::empty(format!("no shape with r = {r} m, omega = {omega} rad/s, c = {c}")));
        }
        for (k, config) in roots.iter().enumerate() {
            write_configuration(cfg, config, &format!("_{}", k + 1))?;
        }
        println!("{} solution(s)", roots.len());
    }
    println!("{MODE_CONVENTION}");
    Ok(())
}

pub fn map(mut cfg: RunConfig, args: &MapArgs) -> Result<(), Failure> {
    if let Some(b) = args.l_bar {
        cfg.cube.l_bar = b;
    }
    if let Some(b) = args.t_bar {
        cfg.cube.t_bar = b;
    }
    if let Some(b) = args.c {
        cfg.cube.c = b;
    }
    if let Some(n) = args.resolution {
        cfg.grid.l_bar = n;
        cfg.grid.t_bar = n;
        cfg.grid.c = n;
    }
    let mut grid = cfg.grid_spec();
    if let Some((axis, value)) = args.slice {
        let fixed = AxisRange::fixed(value);
        match axis {
            Axis::LBar => grid.l_bar = fixed,
            Axis::TBar => grid.t_bar = fixed,
            Axis::C => grid.c = fixed,
        }
    }
    let free = [(Axis::LBar, grid.l_bar), (Axis::TBar, grid.t_bar), (Axis::C, grid.c)];
    for (axis, range) in free {
        if args.slice.map(|s| s.0) != Some(axis) && range.count < 2 {
            return Err(Failure::usage("resolution must be at least 2 on every free axis"));
        }
    }
    grid.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let chain = cfg.chain_params().map_err(Failure::usage)?;
    let map = stability_grid(&grid, &cfg.model(), &chain, args.jobs.max(1))
        .map_err(|e| Failure::usage(e.to_string()))?;
    let path = cfg.output_dir.join("map.csv");
    io::save_map(&path, &map).map_err(io_failure)?;
    let stable = map
        .records
        .iter()
        .filter(|r| r.lambda_max.is_some_and(|l| l <= 0.0))
        .count();
    println!(
        "{} points, {} stable, N = {} links -> {}",
        map.records.len(),
        stable,
        map.model.link_count,
        path.display()
    );
    Ok(())
}

fn point_of([l_bar, t_bar, c]: [f64; 3]) -> Result<ParamPoint, Failure> {
    ParamPoint::new(l_bar, t_bar, c).map_err(|e| Failure::usage(e.to_string()))
}

/// Graph vertex at `point`; absent grid points are usage errors, grid points
/// that did not qualify as vertices are empty outcomes.
fn vertex(graph: &Graph, map: &StabilityMap, point: ParamPoint) -> Result<usize, Failure> {
    if let Some(v) = graph.find(&point) {
        return Ok(v);
    }
    let on_grid = map.records.iter().any(|r| {
        let p = r.point();
        (p.l_bar - point.l_bar).abs() <= 1e-9 * point.l_bar.max(1.0)
            && (p.t_bar - point.t_bar).abs() <= 1e-9 * point.t_bar.max(1.0)
            && (p.c - point.c).abs() <= 1e-9
    });
    let what = format!("({}, {}, {})", point.l_bar, point.t_bar, point.c);
    if on_grid {
        Err(Failure::empty(format!("{what} is not a stable reachable vertex")))
    } else {
        Err(Failure::usage(format!("{what} is not a point of the map grid")))
    }
}

pub fn plan(cfg: &RunConfig, args: &PlanArgs) -> Result<(), Failure> {
    let map_path = args.map.clone().unwrap_or_else(|| cfg.output_dir.join("map.csv"));
    let map = io::load_map(&map_path).map_err(|e| Failure::usage(format!("malformed map {}: {e}", map_path.display())))?;
    let planner = |e: PlannerError| match e {
        PlannerError::EmptyGraph | PlannerError::NoPath => Failure::empty(e.to_string()),
        other => Failure::usage(other.to_string()),
    };
    let graph = build_graph(&map, &cfg.limits(), &cfg.edge_params(), 1).map_err(planner)?;
    let start = match args.start {
        Some(p) => vertex(&graph, &map, point_of(p)?)?,
        None => Graph::REST,
    };
    let goal = match (args.goal_mode, args.goal) {
        (Some(k), _) => Goal::Mode(k),
        (None, Some(p)) => Goal::Point(graph.vertices[vertex(&graph, &map, point_of(p)?)?].point),
        (None, None) => unreachable!("clap requires a goal"),
    };
    let plan = search(&graph, start, goal).map_err(planner)?;
    let trajectory = synthesize_trajectory(&plan, &graph.limits).map_err(planner)?;
    let plan_path = cfg.output_dir.join("plan.json");
    let traj_path = cfg.output_dir.join("trajectory.csv");
    io::save_plan(&plan_path, &plan).map_err(io_failure)?;
    io::save_trajectory(&traj_path, &trajectory).map_err(io_failure)?;
    println!(
        "{} vertices, {} edges; path of {} stops, cost {:.4}, duration {:.3} s",
        graph.vertices.len(),
        graph.edges.len(),
        plan.nodes.len(),
        plan.cost,
        trajectory.duration()
    );
    for node in &plan.nodes {
        println!(
            "  L_bar={:.4} T_bar={:.4} c={:.4}  r={:.4} m omega={:.4} rad/s h={:.4} m",
            node.l_bar, node.t_bar, node.c, node.r, node.omega, node.h
        );
    }
    Ok(())
}

/// Terminal mode as written to `mode.json`; `mode` is absent when the
/// window never settled.
#[derive(Debug, Serialize)]
struct ModeOutput {
    mode: Option<u32>,
    confidence: f64,
    steady: bool,
}

pub fn simulate(mut cfg: RunConfig, args: &SimulateArgs) -> Result<(), Failure> {
    let trajectory = io::load_trajectory(&args.trajectory).map_err(io_failure)?;
    trajectory.validate().map_err(|e| Failure::usage(e.to_string()))?;
    if args.dt.is_some() {
        cfg.simulator.dt = args.dt;
    }
    if let Some(i) = args.integrator {
        cfg.simulator.integrator = i.into();
    }
    if let Some(s) = args.settle {
        cfg.simulator.settle = s;
    }
    if !(args.perturb >= 0.0) {
        return Err(Failure::usage("perturbation amplitude must be non-negative"));
    }
    cfg.validate().map_err(Failure::usage)?;
    let chain = cfg.chain_params().map_err(Failure::usage)?;
    let model = cfg.model();
    let mode_opts = cfg.mode_options();
    let mut opts = cfg.sim_options();
    let omega_end = trajectory.samples[trajectory.samples.len() - 1].omega;
    if omega_end > 0.0 {
        opts.settle = opts.settle.max(mode_opts.revolutions * std::f64::consts::TAU / omega_end);
    }

    let mut init = SimState::straight(&trajectory.samples[0].control(), &model, &chain);
    if args.perturb > 0.0 {
        init = perturb(&init, args.perturb, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    }
    let trace = run(&trajectory, &model, &chain, &init, &opts).map_err(|e| Failure::usage(e.to_string()))?;
    let trace_path = cfg.output_dir.join("trace.csv");
    io::save_trace(&trace_path, &trace).map_err(io_failure)?;

    let mode_path = cfg.output_dir.join("mode.json");
    let (output, outcome) = match measure_terminal_mode(&trace, &mode_opts) {
        Ok(r) => (
            ModeOutput {
                mode: Some(r.mode),
                confidence: r.confidence,
                steady: r.steady,
            },
            Ok(()),
        ),
        Err(e @ SimError::NotSteady { .. }) => (
            ModeOutput {
                mode: None,
                confidence: 0.0,
                steady: false,
            },
            Err(Failure::empty(e.to_string())),
        ),
        Err(e) => return Err(Failure::usage(e.to_string())),
    };
    io::save_json(&mode_path, &output).map_err(io_failure)?;
    if let Some(m) = output.mode {
        println!(
            "{:.3} s simulated; terminal mode {m} (confidence {:.3}) -> {}",
            trace.duration(),
            output.confidence,
            mode_path.display()
        );
        println!("{MODE_CONVENTION}");
    }
    outcome
}

pub fn modes(args: &ModesArgs) -> Result<(), Failure> {
    let table = io::load_shape(&args.shape).map_err(io_failure)?;
    let mode = match classify_mode(&table.u_prime) {
        Ok(m) => m,
        // a shape on the axis is the rest configuration
        Err(KinematicsError::DegenerateShape) => 1,
        Err(e) => return Err(Failure::usage(format!("{}: {e}", args.shape.display()))),
    };
    println!("mode {mode}");
    println!("{MODE_CONVENTION}");
    Ok(())
}
