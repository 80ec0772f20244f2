//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotating_chain::kinematics::{ChainParams, ParamPoint};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn chain() -> ChainParams {
    ChainParams::general(0.5, 0.1).unwrap()
}

/// Uniform point of the cube `(0, l_max] × (0, t_max] × [0, c_max]`.
pub fn random_point(rng: &mut impl Rng, l_max: f64, t_max: f64, c_max: f64) -> ParamPoint {
    ParamPoint {
        l_bar: rng.random_range(0.05..=l_max),
        t_bar: rng.random_range(0.05..=t_max),
        c: rng.random_range(0.0..=c_max),
    }
}

/// `u'(L̄)` from a plain RK4 on `(u, u')` with its own step loop.
pub fn oracle_terminal_slope(point: ParamPoint, steps: usize) -> f64 {
    let t = point.t_bar;
    let accel = |s: f64, u: f64| -u / ((s + t) * (s + t) + u * u).sqrt();
    let h = point.l_bar / steps as f64;
    let mut u = point.c / (1.0 - point.c * point.c).sqrt() * t;
    let mut v = 0.0;
    for i in 0..steps {
        let s = h * i as f64;
        let k1u = v;
        let k1v = accel(s, u);
        let k2u = v + 0.5 * h * k1v;
        let k2v = accel(s + 0.5 * h, u + 0.5 * h * k1u);
        let k3u = v + 0.5 * h * k2v;
        let k3v = accel(s + 0.5 * h, u + 0.5 * h * k2u);
        let k4u = v + h * k3v;
        let k4v = accel(s + h, u + h * k3u);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    v
}

/// Number of roots of `u'(L̄; T̄) = r̄` bracketed by a uniform scan of
/// `n` samples over `(0, t_max]`.
pub fn scan_root_count(l_bar: f64, c: f64, r_bar: f64, t_max: f64, n: usize, steps: usize) -> usize {
    let values: Vec<f64> = (1..=n)
        .map(|k| {
            let t_bar = t_max * k as f64 / n as f64;
            oracle_terminal_slope(ParamPoint { l_bar, t_bar, c }, steps) - r_bar
        })
        .collect();
    let zeros = values.iter().filter(|v| **v == 0.0).count();
    let changes = values
        .windows(2)
        .filter(|w| w[0] != 0.0 && w[1] != 0.0 && w[0].signum() != w[1].signum())
        .count();
    zeros + changes
}

/// Inputs to the force oracle, all in the rotating frame.
pub struct NaiveChain<'a> {
    /// All `N + 1` nodes including both anchors.
    pub x: &'a [Vector3<f64>],
    pub v: &'a [Vector3<f64>],
    pub rest: &'a [f64],
    pub mass: f64,
    pub gravity: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub drag_linear: f64,
    pub drag_quadratic: f64,
    pub omega: f64,
}

/// Accelerations of the interior nodes, summed force by force.
pub fn naive_accelerations(c: &NaiveChain) -> Vec<Vector3<f64>> {
    let n = c.x.len() - 1;
    let mut out = Vec::new();
    for i in 1..n {
        let mut fx = 0.0;
        let mut fy = 0.0;
        let mut fz = c.mass * c.gravity;
        for (j, l0) in [(i - 1, c.rest[i - 1]), (i + 1, c.rest[i])] {
            let dx = c.x[j].x - c.x[i].x;
            let dy = c.x[j].y - c.x[i].y;
            let dz = c.x[j].z - c.x[i].z;
            let len = (dx * dx + dy * dy + dz * dz).sqrt();
            let (ex, ey, ez) = (dx / len, dy / len, dz / len);
            let stretch_rate =
                (c.v[j].x - c.v[i].x) * ex + (c.v[j].y - c.v[i].y) * ey + (c.v[j].z - c.v[i].z) * ez;
            let tension = c.stiffness * (len - l0) + c.damping * stretch_rate;
            fx += tension * ex;
            fy += tension * ey;
            fz += tension * ez;
        }
        let w = c.omega;
        // centrifugal
        fx += c.mass * w * w * c.x[i].x;
        fy += c.mass * w * w * c.x[i].y;
        // coriolis: -2 m ω ẑ × v
        fx += 2.0 * c.mass * w * c.v[i].y;
        fy -= 2.0 * c.mass * w * c.v[i].x;
        // drag against still air
        let ax = c.v[i].x - w * c.x[i].y;
        let ay = c.v[i].y + w * c.x[i].x;
        let az = c.v[i].z;
        let speed = (ax * ax + ay * ay + az * az).sqrt();
        let coef = c.drag_linear + c.drag_quadratic * speed;
        fx -= coef * ax;
        fy -= coef * ay;
        fz -= coef * az;
        out.push(Vector3::new(fx, fy, fz) / c.mass);
    }
    out
}

/// Cell classes of a two-dimensional map slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Stable(u32),
    Unstable,
    Failed,
}

/// Connectivity summary of a slice indexed `[row][col]`.
#[derive(Debug)]
pub struct SliceStructure {
    pub largest_mode1_region: usize,
    pub mode2_cells: usize,
    /// Stable regions holding both modes.
    pub mixed_regions: usize,
    /// Same-row pairs of stable mode-1 and mode-2 cells with no unstable
    /// cell between them.
    pub unbarred_pairs: usize,
}

pub fn slice_structure(cells: &[Vec<Cell>]) -> SliceStructure {
    let rows = cells.len();
    let cols = cells[0].len();
    let mut label = vec![vec![usize::MAX; cols]; rows];
    let mut regions: Vec<Vec<u32>> = Vec::new();
    for r0 in 0..rows {
        for c0 in 0..cols {
            if !matches!(cells[r0][c0], Cell::Stable(_)) || label[r0][c0] != usize::MAX {
                continue;
            }
            let id = regions.len();
            let mut modes = Vec::new();
            let mut stack = vec![(r0, c0)];
            label[r0][c0] = id;
            while let Some((r, c)) = stack.pop() {
                if let Cell::Stable(m) = cells[r][c] {
                    modes.push(m);
                }
                let mut next = Vec::new();
                if r > 0 {
                    next.push((r - 1, c));
                }
                if r + 1 < rows {
                    next.push((r + 1, c));
                }
                if c > 0 {
                    next.push((r, c - 1));
                }
                if c + 1 < cols {
                    next.push((r, c + 1));
                }
                for (nr, nc) in next {
                    if matches!(cells[nr][nc], Cell::Stable(_)) && label[nr][nc] == usize::MAX {
                        label[nr][nc] = id;
                        stack.push((nr, nc));
                    }
                }
            }
            regions.push(modes);
        }
    }
    let largest_mode1_region = regions
        .iter()
        .filter(|m| m.iter().all(|&x| x == 1))
        .map(|m| m.len())
        .max()
        .unwrap_or(0);
    let mode2_cells = cells.iter().flatten().filter(|c| **c == Cell::Stable(2)).count();
    let mixed_regions = regions
        .iter()
        .filter(|m| m.contains(&1) && m.iter().any(|&x| x >= 2))
        .count();
    let mut unbarred_pairs = 0;
    for row in cells {
        let ones: Vec<usize> = (0..cols).filter(|&c| row[c] == Cell::Stable(1)).collect();
        let twos: Vec<usize> = (0..cols).filter(|&c| row[c] == Cell::Stable(2)).collect();
        for &a in &ones {
            for &b in &twos {
                let (lo, hi) = (a.min(b), a.max(b));
                if !(lo + 1..hi).any(|c| row[c] == Cell::Unstable) {
                    unbarred_pairs += 1;
                }
            }
        }
    }
    SliceStructure {
        largest_mode1_region,
        mode2_cells,
        mixed_regions,
        unbarred_pairs,
    }
}
