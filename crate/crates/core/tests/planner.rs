mod common;

use std::sync::OnceLock;

use nalgebra::Vector3;
use proptest::prelude::*;
use rand::Rng;
use rotating_chain::kinematics::{forward_map, ControlInput, ParamPoint};
use rotating_chain::planner::{
    build_graph, check_edge, edge_cost, plan, synthesize_trajectory, EdgeContext, EdgeParams, EdgeRecord, Goal,
    Graph, Plan, PlanNode, RobotLimits, Vertex, GOAL_DWELL,
};
use rotating_chain::stability::{
    analyze_configuration, stability_grid, AxisRange, GridSpec, LumpedModelParams, LumpedState, StabilityMap,
};

use common::{chain, rng};

fn small_map() -> &'static StabilityMap {
    static MAP: OnceLock<StabilityMap> = OnceLock::new();
    MAP.get_or_init(|| {
        let grid = GridSpec {
            l_bar: AxisRange::new(1.0, 5.0, 3),
            t_bar: AxisRange::new(0.5, 1.5, 3),
            c: AxisRange::new(0.1, 0.7, 4),
        };
        stability_grid(&grid, &LumpedModelParams::default(), &chain(), 1).unwrap()
    })
}

fn bench_graph() -> &'static Graph {
    static GRAPH: OnceLock<Graph> = OnceLock::new();
    GRAPH.get_or_init(|| build_graph(small_map(), &RobotLimits::bench(), &EdgeParams::default(), 1).unwrap())
}

fn vertex_at(l: f64, t: f64, c: f64) -> Vertex {
    let ch = chain();
    let point = ParamPoint::new(l, t, c).unwrap();
    let cfg = forward_map(point, &ch).unwrap();
    let report = analyze_configuration(&cfg, &LumpedModelParams::default(), &ch).unwrap();
    Vertex {
        point,
        control: cfg.control,
        mode: cfg.mode,
        lambda_max: report.lambda_max,
        grid_index: Some([0, 0, 0]),
        equilibrium: report.equilibrium,
    }
}

fn check(a: &Vertex, b: &Vertex) -> EdgeRecord {
    let (model, ch, limits, params) = (LumpedModelParams::default(), chain(), RobotLimits::bench(), EdgeParams::default());
    let ctx = EdgeContext {
        model: &model,
        chain: &ch,
        limits: &limits,
        params: &params,
    };
    check_edge(a, b, 0, 1, &ctx)
}

#[test]
fn rest_vertex_is_feasible() {
    let g = bench_graph();
    let rest = &g.vertices[Graph::REST];
    assert!(rest.is_rest());
    assert_eq!(rest.point.c, 0.0);
    assert_eq!((rest.control.r, rest.control.omega), (0.0, 0.5));
    assert!((rest.control.h - g.chain.length).abs() < 1e-12);
    assert!(rest.lambda_max <= 0.0);
}

#[test]
fn every_edge_revalidates() {
    let g = bench_graph();
    assert!(!g.edges.is_empty());
    for e in &g.edges {
        assert!(g.check(e.from, e.to).feasible, "{e:?}");
    }
}

#[test]
fn rest_reaches_mode_one() {
    let g = bench_graph();
    let p = plan(g, Graph::REST, Goal::Mode(1)).unwrap();
    // the rest vertex is itself mode 1
    assert_eq!(p.nodes.len(), 1);
    let target = g.vertices.iter().position(|v| !v.is_rest() && v.mode == 1).unwrap();
    let p = plan(g, Graph::REST, Goal::Point(g.vertices[target].point)).unwrap();
    assert!(p.nodes.len() >= 2);
    assert_eq!(p.nodes.last().unwrap().dwell, GOAL_DWELL);
    assert!(p.nodes[..p.nodes.len() - 1].iter().all(|n| n.dwell == 0.0));
    for w in p.path.windows(2) {
        assert!(g.check(w[0], w[1]).feasible);
    }
    let traj = synthesize_trajectory(&p, &g.limits).unwrap();
    traj.validate().unwrap();
    assert!(traj.respects_rates(&g.limits, 1e-12));
}

#[test]
fn goal_at_start_is_a_single_stop() {
    let g = bench_graph();
    let p = plan(g, Graph::REST, Goal::Point(g.vertices[Graph::REST].point)).unwrap();
    assert_eq!(p.nodes.len(), 1);
    assert!(p.edges.is_empty());
    assert_eq!(p.cost, 0.0);
}

#[test]
fn tightening_limits_never_grows_the_graph() {
    let loose = bench_graph();
    let tight_limits = RobotLimits {
        r_range: [0.0, 0.1],
        omega_range: [0.5, 8.0],
        ..RobotLimits::bench()
    };
    assert!(tight_limits.is_within(&loose.limits));
    let tight = build_graph(small_map(), &tight_limits, &EdgeParams::default(), 1).unwrap();
    assert!(tight.vertices.len() < loose.vertices.len());
    for v in &tight.vertices {
        assert!(loose.find(&v.point).is_some());
    }
    for e in &tight.edges {
        let a = loose.find(&tight.vertices[e.from].point).unwrap();
        let b = loose.find(&tight.vertices[e.to].point).unwrap();
        assert!(loose.edge(a, b).is_some());
    }
}

#[test]
fn small_c_step_fails_condition_one() {
    let rec = check(&vertex_at(3.0, 1.0, 0.3), &vertex_at(3.0, 1.0, 0.35));
    assert!((rec.k - 0.05).abs() < 1e-12);
    assert!(!rec.condition1);
    assert!(!rec.feasible);
}

#[test]
fn moderate_step_through_stable_points_passes() {
    let g = bench_graph();
    let rec = check(&g.vertices[Graph::REST], &vertex_at(3.0, 1.0, 0.3));
    assert!((rec.k - 0.3).abs() < 1e-12);
    assert!(rec.max_lambda <= 1.0);
    assert!(rec.condition1 && rec.condition2 && rec.condition3 && rec.feasible);
}

#[test]
fn edge_through_strongly_unstable_samples_fails_condition_two() {
    let rec = check(&vertex_at(10.0, 1.0, 0.3), &vertex_at(2.0, 1.0, 0.1));
    assert!(rec.condition1);
    assert!(rec.max_lambda.is_finite() && rec.max_lambda >= 2.0, "{rec:?}");
    assert!(!rec.condition2 && !rec.feasible);
}

#[test]
fn direct_rest_to_mode_two_fails() {
    let g = bench_graph();
    let goal = vertex_at(12.0, 2.0, 0.4);
    assert_eq!(goal.mode, 2);
    assert!(goal.lambda_max <= 0.0);
    let rec = check(&g.vertices[Graph::REST], &goal);
    assert!(rec.condition1);
    assert!(!rec.condition2 && !rec.feasible);
}

/// Graph over random controls with every listed edge marked feasible.
fn random_graph(r: &mut impl Rng, n: usize, density: f64) -> Graph {
    let limits = RobotLimits::bench();
    let ch = chain();
    let vertices = (0..n)
        .map(|i| {
            let control = ControlInput::new(
                r.random_range(limits.r_range[0]..=limits.r_range[1]),
                r.random_range(limits.omega_range[0]..=limits.omega_range[1]),
                r.random_range(limits.h_range[0]..=limits.h_range[1]),
            );
            let top = Vector3::new(control.r, 0.0, control.h);
            Vertex {
                point: ParamPoint {
                    l_bar: 1.0 + i as f64,
                    t_bar: 1.0,
                    c: 0.0,
                },
                control,
                mode: r.random_range(1..=3),
                lambda_max: -1.0,
                grid_index: if i == 0 { None } else { Some([i, 0, 0]) },
                equilibrium: LumpedState::straight(Vector3::zeros(), top, 2, 0.5 * ch.length),
            }
        })
        .collect();
    let mut edges = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if from != to && r.random_bool(density) {
                edges.push(EdgeRecord {
                    from,
                    to,
                    k: 0.2,
                    max_lambda: -1.0,
                    condition1: true,
                    condition2: true,
                    condition3: true,
                    feasible: true,
                    tracked_mode: None,
                    arrived: true,
                });
            }
        }
    }
    Graph {
        vertices,
        edges,
        limits,
        params: EdgeParams::default(),
        model: LumpedModelParams::default(),
        chain: ch,
    }
}

/// Cheapest simple path from `v` to any vertex accepted by `is_goal`.
fn brute_force(g: &Graph, v: usize, is_goal: &dyn Fn(usize) -> bool, seen: &mut Vec<bool>) -> f64 {
    if is_goal(v) {
        return 0.0;
    }
    seen[v] = true;
    let mut best = f64::INFINITY;
    for e in g.outgoing(v) {
        if !seen[e.to] {
            best = best.min(edge_cost(g, v, e.to) + brute_force(g, e.to, is_goal, seen));
        }
    }
    seen[v] = false;
    best
}

fn path_cost(g: &Graph, p: &Plan) -> f64 {
    p.path.windows(2).map(|w| edge_cost(g, w[0], w[1])).sum()
}

#[test]
fn search_cost_matches_exhaustive_enumeration() {
    let mut r = rng(17);
    let mut found = 0;
    for trial in 0..200 {
        let n = 2 + trial % 11;
        let density = r.random_range(0.1..0.5);
        let g = random_graph(&mut r, n, density);
        let goal_v = r.random_range(0..n);
        let mode = r.random_range(1..=3);
        let goals: [(Goal, Box<dyn Fn(usize) -> bool>); 2] = [
            (Goal::Point(g.vertices[goal_v].point), Box::new(move |v| v == goal_v)),
            (Goal::Mode(mode), Box::new(|v| g.vertices[v].mode == mode)),
        ];
        for (goal, is_goal) in &goals {
            let oracle = brute_force(&g, 0, is_goal.as_ref(), &mut vec![false; n]);
            match plan(&g, 0, *goal) {
                Ok(p) => {
                    found += 1;
                    assert!((p.cost - oracle).abs() <= 1e-12 * oracle.max(1.0), "{} vs {oracle}", p.cost);
                    assert!((path_cost(&g, &p) - p.cost).abs() <= 1e-12 * oracle.max(1.0));
                    assert!(is_goal(*p.path.last().unwrap()));
                }
                Err(_) => assert!(oracle.is_infinite()),
            }
        }
    }
    assert!(found > 100);
}

fn node_strategy() -> impl Strategy<Value = PlanNode> {
    let lim = RobotLimits::bench();
    (
        lim.r_range[0]..=lim.r_range[1],
        lim.omega_range[0]..=lim.omega_range[1],
        lim.h_range[0]..=lim.h_range[1],
        prop_oneof![Just(0.0), 0.0..3.0f64],
    )
        .prop_map(|(r, omega, h, dwell)| PlanNode {
            l_bar: 1.0,
            t_bar: 1.0,
            c: 0.0,
            r,
            omega,
            h,
            dwell,
        })
}

proptest! {
    #[test]
    fn trajectory_respects_rate_limits(nodes in prop::collection::vec(node_strategy(), 1..8)) {
        let limits = RobotLimits::bench();
        let n = nodes.len();
        let plan = Plan { nodes, edges: vec![], path: (0..n).collect(), cost: 0.0 };
        let traj = synthesize_trajectory(&plan, &limits).unwrap();
        prop_assert_eq!(traj.samples[0].t, 0.0);
        prop_assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
        prop_assert!(traj.respects_rates(&limits, 1e-12));
        let last = plan.nodes.last().unwrap();
        prop_assert_eq!(traj.samples.last().unwrap().control(), last.control());
        let dwell: f64 = plan.nodes.iter().map(|n| n.dwell).sum();
        prop_assert!(traj.duration() >= dwell - 1e-12);
    }
}
