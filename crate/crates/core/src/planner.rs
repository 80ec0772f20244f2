//! Graph search over stable configurations and control trajectory synthesis.
//!
//! Vertices are stable grid points whose controls the robot can reach, plus
//! a virtual rest vertex. A directed edge `i → j` exists when the parameter
//! change keeps `c` moving by a moderate amount, the chain tracked along the
//! straight segment in the parameter cube stays below the path stability
//! bound, and every sampled control is reachable.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{self, ChainParams, ControlInput, ParamPoint};
use crate::stability::{
    analyze_configuration, analyze_seed, LumpedModelParams, LumpedState, StabilityError, StabilityMap,
    StabilityReport,
};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no vertex of the map is stable and reachable")]
    EmptyGraph,
    #[error("no path to the goal")]
    NoPath,
    #[error("invalid planner input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

pub type Result<T, E = PlannerError> = std::result::Result<T, E>;

/// Reachable control box and rate limits of the driving arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotLimits {
    /// Attachment radius range, m.
    pub r_range: [f64; 2],
    /// Spin rate range, rad/s.
    pub omega_range: [f64; 2],
    /// Attachment height range, m.
    pub h_range: [f64; 2],
    /// m/s.
    pub r_dot_max: f64,
    /// rad/s².
    pub omega_dot_max: f64,
    /// m/s.
    pub h_dot_max: f64,
}

impl RobotLimits {
    /// Tabletop arm envelope used by the bundled configuration.
    pub fn bench() -> Self {
        Self {
            r_range: [0.0, 0.25],
            omega_range: [0.5, 25.0],
            h_range: [0.1, 0.5],
            r_dot_max: 0.1,
            omega_dot_max: 2.0,
            h_dot_max: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, range) in [("r", self.r_range), ("omega", self.omega_range), ("h", self.h_range)] {
            if !(range[0].is_finite() && range[1].is_finite() && range[0] <= range[1]) {
                return Err(PlannerError::InvalidInput(format!("{name} range is empty")));
            }
        }
        for (name, rate) in [
            ("r_dot_max", self.r_dot_max),
            ("omega_dot_max", self.omega_dot_max),
            ("h_dot_max", self.h_dot_max),
        ] {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(PlannerError::InvalidInput(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Relative slack absorbing round-off in reconstructed controls.
    const SLACK: f64 = 1e-9;

    pub fn contains(&self, u: &ControlInput) -> bool {
        let inside = |v: f64, [lo, hi]: [f64; 2]| {
            let tol = Self::SLACK * hi.abs().max(1.0);
            v >= lo - tol && v <= hi + tol
        };
        inside(u.r, self.r_range) && inside(u.omega, self.omega_range) && inside(u.h, self.h_range)
    }

    /// True when `self` admits no control or rate that `other` rejects.
    pub fn is_within(&self, other: &RobotLimits) -> bool {
        let sub = |a: [f64; 2], b: [f64; 2]| a[0] >= b[0] && a[1] <= b[1];
        sub(self.r_range, other.r_range)
            && sub(self.omega_range, other.omega_range)
            && sub(self.h_range, other.h_range)
            && self.r_dot_max <= other.r_dot_max
            && self.omega_dot_max <= other.omega_dot_max
            && self.h_dot_max <= other.h_dot_max
    }

    /// Control-space distance with each axis scaled by its range span.
    pub fn normalized_distance(&self, a: &ControlInput, b: &ControlInput) -> f64 {
        let span = |[lo, hi]: [f64; 2]| if hi > lo { hi - lo } else { 1.0 };
        let dr = (a.r - b.r) / span(self.r_range);
        let dw = (a.omega - b.omega) / span(self.omega_range);
        let dh = (a.h - b.h) / span(self.h_range);
        (dr * dr + dw * dw + dh * dh).sqrt()
    }
}

/// Which edges the `c`-step window applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Condition1Scope {
    #[default]
    All,
    /// Edges that keep `c` fixed are exempt.
    CChangingOnly,
}

/// Edge validation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    /// Open window for `K = |Δc|`.
    pub k_min: f64,
    pub k_max: f64,
    /// Bound on `λ_max` at every sample along an edge, 1/s.
    pub lambda_path: f64,
    /// Bound on `λ_max` for a grid point to become a vertex, 1/s.
    pub lambda_node: f64,
    /// Samples per edge including both ends.
    pub samples: usize,
    pub condition1_scope: Condition1Scope,
    /// Largest index distance along the `L̄` and `T̄` grid axes between the
    /// ends of a candidate edge.
    pub max_hop: usize,
    /// Also reject edges whose tracked branch ends away from the target's
    /// own equilibrium.
    pub require_arrival: bool,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            k_min: 0.1,
            k_max: 0.5,
            lambda_path: 1.0,
            lambda_node: 0.0,
            samples: 10,
            condition1_scope: Condition1Scope::All,
            max_hop: 1,
            require_arrival: false,
        }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(PlannerError::InvalidInput("an edge needs at least 2 samples".into()));
        }
        if !(self.k_min >= 0.0 && self.k_min < self.k_max) {
            return Err(PlannerError::InvalidInput("K window is empty".into()));
        }
        Ok(())
    }

    /// Condition 1 on its own.
    pub fn step_ok(&self, k: f64) -> bool {
        if k == 0.0 && self.condition1_scope == Condition1Scope::CChangingOnly {
            return true;
        }
        k > self.k_min && k < self.k_max
    }
}

/// A graph vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub point: ParamPoint,
    pub control: ControlInput,
    pub mode: u32,
    pub lambda_max: f64,
    /// Grid indices `(L̄, T̄, c)`; `None` for the rest vertex.
    pub grid_index: Option<[usize; 3]>,
    /// Lumped equilibrium seeded from the vertex's own shape.
    pub equilibrium: LumpedState,
}

impl Vertex {
    pub fn is_rest(&self) -> bool {
        self.grid_index.is_none()
    }
}

/// Outcome of validating one directed edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: usize,
    pub to: usize,
    /// `|Δc|`.
    #[serde(rename = "K")]
    pub k: f64,
    /// Largest `λ_max` over the evaluated samples; infinite when the
    /// equilibrium could not be followed.
    pub max_lambda: f64,
    pub condition1: bool,
    pub condition2: bool,
    pub condition3: bool,
    pub feasible: bool,
    /// Mode of the tracked equilibrium at the last sample.
    pub tracked_mode: Option<u32>,
    /// Tracked branch ends on the target vertex's equilibrium.
    pub arrived: bool,
}

/// Largest node distance, as a fraction of the chain length, at which the
/// tracked equilibrium counts as the target's.
pub const BRANCH_MATCH: f64 = 1e-4;

fn same_branch(a: &LumpedState, b: &LumpedState, length: f64) -> bool {
    a.positions()
        .iter()
        .zip(b.positions())
        .all(|(p, q)| (p - q).norm() <= BRANCH_MATCH * length)
}

/// Shared inputs of edge validation.
#[derive(Debug, Clone, Copy)]
pub struct EdgeContext<'a> {
    pub model: &'a LumpedModelParams,
    pub chain: &'a ChainParams,
    pub limits: &'a RobotLimits,
    pub params: &'a EdgeParams,
}

/// Reseeds `previous` for the configuration at `point`: positions carried
/// over, attachment and rest lengths taken from the new shape.
fn continuation_seed(previous: &LumpedState, fresh: &LumpedState) -> LumpedState {
    let mut seed = fresh.clone();
    for i in 1..previous.link_count() {
        seed.set_position(i, &previous.position(i));
    }
    seed
}

/// Mode of a lumped equilibrium read off its radial profile along the
/// attachment direction.
pub fn lumped_mode(state: &LumpedState) -> u32 {
    let top = state.position(state.link_count());
    let dir = nalgebra::Vector2::new(top.x, top.y);
    let norm = dir.norm();
    let profile: Vec<f64> = state
        .positions()
        .iter()
        .map(|p| if norm > 0.0 { (p.x * dir.x + p.y * dir.y) / norm } else { p.x })
        .collect();
    let amplitude = profile.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let n = profile.len();
    kinematics::count_sign_changes(&profile[1..n - 1], 0.02 * amplitude) as u32 + 1
}

/// Validates the directed edge `a → b`.
///
/// Condition 2 tracks one equilibrium branch: each sample is solved from
/// the previous sample's equilibrium, the first from `a`'s own shape, and
/// must stay below the path bound. Whether the branch ends on `b`'s own
/// equilibrium is recorded and optionally enforced.
pub fn check_edge(a: &Vertex, b: &Vertex, from: usize, to: usize, ctx: &EdgeContext) -> EdgeRecord {
    let k = (a.point.c - b.point.c).abs();
    let condition1 = ctx.params.step_ok(k);
    let mut record = EdgeRecord {
        from,
        to,
        k,
        max_lambda: f64::INFINITY,
        condition1,
        condition2: false,
        condition3: false,
        feasible: false,
        tracked_mode: None,
        arrived: false,
    };
    let m = ctx.params.samples.max(2);
    let mut reachable = true;
    let mut max_lambda = f64::NEG_INFINITY;
    let mut previous: Option<StabilityReport> = None;
    let mut tracked = true;
    let mut lost_to_instability = false;
    for i in 0..m {
        let point = a.point.lerp(&b.point, i as f64 / (m - 1) as f64);
        let Ok(config) = kinematics::forward_map(point, ctx.chain) else {
            reachable = false;
            tracked = false;
            break;
        };
        reachable &= ctx.limits.contains(&config.control);
        let report = match &previous {
            None => analyze_configuration(&config, ctx.model, ctx.chain),
            Some(prev) => {
                let fresh = LumpedState::from_configuration(&config, ctx.model.stiffness, ctx.model.link_count);
                let seed = continuation_seed(&prev.equilibrium, &fresh);
                analyze_seed(&seed, ctx.model, ctx.chain, config.omega)
            }
        };
        match report {
            Ok(rep) => {
                max_lambda = max_lambda.max(rep.lambda_max);
                if rep.lambda_max > ctx.params.lambda_path {
                    tracked = false;
                    lost_to_instability = true;
                    break;
                }
                previous = Some(rep);
            }
            Err(_) => {
                tracked = false;
                break;
            }
        }
    }
    record.max_lambda = if tracked || lost_to_instability { max_lambda } else { f64::INFINITY };
    record.arrived = tracked
        && previous
            .as_ref()
            .is_some_and(|r| same_branch(&r.equilibrium, &b.equilibrium, ctx.chain.length));
    record.condition2 =
        tracked && max_lambda <= ctx.params.lambda_path && (record.arrived || !ctx.params.require_arrival);
    record.condition3 = reachable && tracked;
    record.tracked_mode = previous.filter(|_| tracked).map(|r| lumped_mode(&r.equilibrium));
    record.feasible = record.condition1 && record.condition2 && record.condition3;
    record
}

/// Rest vertex: the straight chain spun at the lowest reachable rate.
pub fn rest_vertex(map: &StabilityMap, limits: &RobotLimits) -> Result<Vertex> {
    let omega = limits.omega_range[0];
    if !(omega > 0.0) {
        return Err(PlannerError::InvalidInput("lowest spin rate must be positive".into()));
    }
    let point = ParamPoint {
        l_bar: map.chain.l_bar_for_omega(omega),
        t_bar: map.grid.t_bar.min,
        c: 0.0,
    };
    let config = kinematics::forward_map(point, &map.chain)
        .map_err(|e| PlannerError::InvalidInput(e.to_string()))?;
    let report = analyze_configuration(&config, &map.model, &map.chain)?;
    Ok(Vertex {
        point,
        control: config.control,
        mode: config.mode,
        lambda_max: report.lambda_max,
        grid_index: None,
        equilibrium: report.equilibrium,
    })
}

/// Feasibility graph. Vertex 0 is the rest vertex.
#[derive(Debug, Clone)]
pub struct Graph {
    pub vertices: Vec<Vertex>,
    /// Feasible directed edges.
    pub edges: Vec<EdgeRecord>,
    pub limits: RobotLimits,
    pub params: EdgeParams,
    pub model: LumpedModelParams,
    pub chain: ChainParams,
}

impl Graph {
    pub const REST: usize = 0;

    pub fn context(&self) -> EdgeContext<'_> {
        EdgeContext {
            model: &self.model,
            chain: &self.chain,
            limits: &self.limits,
            params: &self.params,
        }
    }

    pub fn outgoing(&self, v: usize) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.iter().filter(move |e| e.from == v)
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&EdgeRecord> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Vertex at the given parameter point.
    pub fn find(&self, point: &ParamPoint) -> Option<usize> {
        const TOL: f64 = 1e-9;
        self.vertices.iter().position(|v| {
            (v.point.l_bar - point.l_bar).abs() <= TOL * point.l_bar.abs().max(1.0)
                && (v.point.t_bar - point.t_bar).abs() <= TOL * point.t_bar.abs().max(1.0)
                && (v.point.c - point.c).abs() <= TOL
        })
    }

    /// Validates an arbitrary directed pair.
    pub fn check(&self, from: usize, to: usize) -> EdgeRecord {
        check_edge(&self.vertices[from], &self.vertices[to], from, to, &self.context())
    }

    fn candidate(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let (va, vb) = (&self.vertices[a], &self.vertices[b]);
        if !self.params.step_ok((va.point.c - vb.point.c).abs()) {
            return false;
        }
        match (va.grid_index, vb.grid_index) {
            (Some(ia), Some(ib)) => {
                ia[0].abs_diff(ib[0]) <= self.params.max_hop && ia[1].abs_diff(ib[1]) <= self.params.max_hop
            }
            _ => true,
        }
    }
}

/// Builds the feasibility graph over `map` on a pool of `jobs` threads.
/// Vertices and edges come out in grid order regardless of scheduling.
pub fn build_graph(map: &StabilityMap, limits: &RobotLimits, params: &EdgeParams, jobs: usize) -> Result<Graph> {
    limits.validate()?;
    params.validate()?;
    let mut vertices = Vec::new();
    if limits.omega_range[0] > 0.0 {
        if let Ok(rest) = rest_vertex(map, limits) {
            if rest.lambda_max <= params.lambda_node && limits.contains(&rest.control) {
                vertices.push(rest);
            }
        }
    }
    let has_rest = !vertices.is_empty();
    let candidates: Vec<usize> = map
        .records
        .iter()
        .enumerate()
        .filter(|(_, rec)| {
            rec.equilibrium_ok
                && rec.lambda_max.is_some_and(|l| l <= params.lambda_node)
                && limits.contains(&rec.control())
        })
        .map(|(flat, _)| flat)
        .collect();
    let make = |flat: usize| -> Option<Vertex> {
        let rec = &map.records[flat];
        let config = kinematics::forward_map(rec.point(), &map.chain).ok()?;
        let report = analyze_configuration(&config, &map.model, &map.chain).ok()?;
        Some(Vertex {
            point: rec.point(),
            control: rec.control(),
            mode: rec.mode,
            lambda_max: report.lambda_max,
            grid_index: Some(map.grid.unflatten(flat)),
            equilibrium: report.equilibrium,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PlannerError::InvalidInput(e.to_string()))?;
    let grid_vertices: Vec<Option<Vertex>> = pool.install(|| candidates.par_iter().map(|&f| make(f)).collect());
    vertices.extend(grid_vertices.into_iter().flatten());
    if vertices.is_empty() {
        return Err(PlannerError::EmptyGraph);
    }
    if !has_rest {
        return Err(PlannerError::InvalidInput(
            "rest vertex is unreachable under the given limits".into(),
        ));
    }
    let mut graph = Graph {
        vertices,
        edges: Vec::new(),
        limits: *limits,
        params: *params,
        model: map.model,
        chain: map.chain,
    };
    let n = graph.vertices.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| graph.candidate(a, b))
        .collect();
    let mut edges: Vec<EdgeRecord> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(a, b)| graph.check(a, b))
            .filter(|e| e.feasible)
            .collect()
    });
    edges.sort_by_key(|e| (e.from, e.to));
    graph.edges = edges;
    Ok(graph)
}

/// Planning target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal {
    Mode(u32),
    Point(ParamPoint),
}

/// One stop of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    #[serde(rename = "L_bar")]
    pub l_bar: f64,
    #[serde(rename = "T_bar")]
    pub t_bar: f64,
    pub c: f64,
    pub r: f64,
    pub omega: f64,
    pub h: f64,
    /// Hold time at this stop, s.
    pub dwell: f64,
}

impl PlanNode {
    fn new(v: &Vertex, dwell: f64) -> Self {
        Self {
            l_bar: v.point.l_bar,
            t_bar: v.point.t_bar,
            c: v.point.c,
            r: v.control.r,
            omega: v.control.omega,
            h: v.control.h,
            dwell,
        }
    }

    pub fn point(&self) -> ParamPoint {
        ParamPoint {
            l_bar: self.l_bar,
            t_bar: self.t_bar,
            c: self.c,
        }
    }

    pub fn control(&self) -> ControlInput {
        ControlInput::new(self.r, self.omega, self.h)
    }
}

/// Edge summary as exported with a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEdge {
    #[serde(rename = "K")]
    pub k: f64,
    pub max_lambda: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub nodes: Vec<PlanNode>,
    pub edges: Vec<PlanEdge>,
    /// Vertex ids in the graph the plan was built on.
    #[serde(skip)]
    pub path: Vec<usize>,
    /// Cumulative normalized control distance.
    #[serde(skip)]
    pub cost: f64,
}

/// Hold time attached to the goal of every plan, s.
pub const GOAL_DWELL: f64 = 5.0;

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    vertex: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost of the directed edge `a → b`.
pub fn edge_cost(graph: &Graph, a: usize, b: usize) -> f64 {
    graph
        .limits
        .normalized_distance(&graph.vertices[a].control, &graph.vertices[b].control)
}

fn is_goal(graph: &Graph, v: usize, goal: &Goal, goal_vertex: Option<usize>) -> bool {
    match goal {
        Goal::Mode(k) => graph.vertices[v].mode == *k,
        Goal::Point(_) => Some(v) == goal_vertex,
    }
}

/// Cheapest path from `start` to a vertex matching `goal` by uniform-cost
/// search. The goal stop carries [`GOAL_DWELL`].
pub fn plan(graph: &Graph, start: usize, goal: Goal) -> Result<Plan> {
    if start >= graph.vertices.len() {
        return Err(PlannerError::InvalidInput(format!("start vertex {start} is not in the graph")));
    }
    let goal_vertex = match goal {
        Goal::Point(p) => Some(graph.find(&p).ok_or(PlannerError::NoPath)?),
        Goal::Mode(_) => None,
    };
    let n = graph.vertices.len();
    let mut adjacency: Vec<Vec<&EdgeRecord>> = vec![Vec::new(); n];
    for e in &graph.edges {
        adjacency[e.from].push(e);
    }
    let mut best = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[start] = 0.0;
    heap.push(Frontier { cost: 0.0, vertex: start });
    let mut reached = None;
    while let Some(Frontier { cost, vertex }) = heap.pop() {
        if done[vertex] {
            continue;
        }
        done[vertex] = true;
        if is_goal(graph, vertex, &goal, goal_vertex) {
            reached = Some(vertex);
            break;
        }
        for e in &adjacency[vertex] {
            let next = cost + edge_cost(graph, vertex, e.to);
            if next < best[e.to] {
                best[e.to] = next;
                parent[e.to] = Some(vertex);
                heap.push(Frontier { cost: next, vertex: e.to });
            }
        }
    }
    let end = reached.ok_or(PlannerError::NoPath)?;
    let mut path = vec![end];
    while let Some(p) = parent[*path.last().unwrap()] {
        path.push(p);
    }
    path.reverse();
    Ok(plan_from_path(graph, &path, best[end]))
}

/// Assembles a plan along an explicit vertex path.
pub fn plan_from_path(graph: &Graph, path: &[usize], cost: f64) -> Plan {
    let nodes = path
        .iter()
        .enumerate()
        .map(|(i, &v)| PlanNode::new(&graph.vertices[v], if i + 1 == path.len() { GOAL_DWELL } else { 0.0 }))
        .collect();
    let edges = path
        .windows(2)
        .map(|w| {
            let rec = graph.edge(w[0], w[1]).cloned().unwrap_or_else(|| graph.check(w[0], w[1]));
            PlanEdge {
                k: rec.k,
                max_lambda: rec.max_lambda,
                feasible: rec.feasible,
            }
        })
        .collect();
    Plan {
        nodes,
        edges,
        path: path.to_vec(),
        cost,
    }
}

/// One trajectory knot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// s.
    pub t: f64,
    /// m.
    pub r: f64,
    /// rad/s.
    pub omega: f64,
    /// m.
    pub h: f64,
}

impl TrajectorySample {
    pub fn control(&self) -> ControlInput {
        ControlInput::new(self.r, self.omega, self.h)
    }
}

/// Piecewise-linear control history.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlTrajectory {
    pub samples: Vec<TrajectorySample>,
}

impl ControlTrajectory {
    pub fn constant(control: ControlInput, duration: f64) -> Self {
        let knot = |t| TrajectorySample {
            t,
            r: control.r,
            omega: control.omega,
            h: control.h,
        };
        Self {
            samples: vec![knot(0.0), knot(duration)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| PlannerError::InvalidInput("trajectory has no samples".into()))?;
        if first.t != 0.0 {
            return Err(PlannerError::InvalidInput("trajectory must start at t = 0".into()));
        }
        if self.samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(PlannerError::InvalidInput("trajectory times must increase".into()));
        }
        if self
            .samples
            .iter()
            .any(|s| !(s.r.is_finite() && s.omega.is_finite() && s.h.is_finite()))
        {
            return Err(PlannerError::InvalidInput("trajectory has non-finite controls".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map(|s| s.t).unwrap_or(0.0)
    }

    /// Control at time `t`, held constant outside the sampled span.
    pub fn sample(&self, t: f64) -> ControlInput {
        let s = &self.samples;
        if t <= s[0].t {
            return s[0].control();
        }
        let i = s.partition_point(|k| k.t <= t);
        if i >= s.len() {
            return s[s.len() - 1].control();
        }
        let (a, b) = (&s[i - 1], &s[i]);
        a.control().lerp(&b.control(), (t - a.t) / (b.t - a.t))
    }

    /// True when every segment obeys the rate limits up to `tol`.
    pub fn respects_rates(&self, limits: &RobotLimits, tol: f64) -> bool {
        self.samples.windows(2).all(|w| {
            let dt = w[1].t - w[0].t;
            (w[1].r - w[0].r).abs() / dt <= limits.r_dot_max + tol
                && (w[1].omega - w[0].omega).abs() / dt <= limits.omega_dot_max + tol
                && (w[1].h - w[0].h).abs() / dt <= limits.h_dot_max + tol
        })
    }
}

/// Rate-limited ramp time between two controls, s.
pub fn ramp_duration(a: &ControlInput, b: &ControlInput, limits: &RobotLimits) -> f64 {
    ((a.r - b.r).abs() / limits.r_dot_max)
        .max((a.omega - b.omega).abs() / limits.omega_dot_max)
        .max((a.h - b.h).abs() / limits.h_dot_max)
}

/// Linear control ramps between consecutive plan stops, each as fast as the
/// slowest axis allows, with dwell holds inserted.
pub fn synthesize_trajectory(plan: &Plan, limits: &RobotLimits) -> Result<ControlTrajectory> {
    limits.validate()?;
    let first = plan
        .nodes
        .first()
        .ok_or_else(|| PlannerError::InvalidInput("plan has no nodes".into()))?;
    let knot = |t: f64, u: ControlInput| TrajectorySample {
        t,
        r: u.r,
        omega: u.omega,
        h: u.h,
    };
    let mut samples = vec![knot(0.0, first.control())];
    let mut t = 0.0;
    for (i, node) in plan.nodes.iter().enumerate() {
        if i > 0 {
            let prev = plan.nodes[i - 1].control();
            let dur = ramp_duration(&prev, &node.control(), limits);
            if dur > 0.0 {
                t += dur;
                samples.push(knot(t, node.control()));
            }
        }
        if node.dwell > 0.0 {
            t += node.dwell;
            samples.push(knot(t, node.control()));
        }
    }
    Ok(ControlTrajectory { samples })
}
