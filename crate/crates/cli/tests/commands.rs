use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rotating_chain::io::{load_json, load_map, load_plan, load_shape, load_trajectory, ConfigSummary};
use rotating_chain::kinematics::{forward_map, shooting_residual, ChainParams, ParamPoint, DEFAULT_STEPS};
use tempfile::TempDir;

fn rchain(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rchain"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL_MAP: [&str; 8] = ["map", "--l-bar", "1,5", "--t-bar", "0.5,1.5", "--c", "0.1,0.7", "--resolution"];

fn small_map(dir: &Path) {
    let mut args = SMALL_MAP.to_vec();
    args.push("3");
    let o = rchain(dir, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn solve_param_on_the_axis_is_a_straight_mode_one_chain() {
    let dir = TempDir::new().unwrap();
    let o = rchain(dir.path(), &["solve", "--param", "1,1,0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: ConfigSummary = load_json(&dir.path().join("summary.json")).unwrap();
    assert_eq!(summary.mode, 1);
    assert_eq!(summary.r, 0.0);
    let shape = load_shape(&dir.path().join("shape.csv")).unwrap();
    assert!(shape.rho.iter().all(|&r| r == 0.0));
    assert!(stdout(&o).contains("interior axis crossings + 1"));
}

#[test]
fn solve_summary_matches_the_library() {
    let dir = TempDir::new().unwrap();
    let o = rchain(dir.path(), &["solve", "--param", "12,2,0.4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: ConfigSummary = load_json(&dir.path().join("summary.json")).unwrap();
    let cfg = forward_map(ParamPoint::new(12.0, 2.0, 0.4).unwrap(), &ChainParams::general(0.5, 0.1).unwrap()).unwrap();
    assert_eq!(summary, ConfigSummary::from(&cfg));
    let modes = rchain(dir.path(), &["modes", "--shape", dir.path().join("shape.csv").to_str().unwrap()]);
    assert_eq!(code(&modes), 0, "{}", stderr(&modes));
    assert!(stdout(&modes).starts_with("mode 2\n"));
}

/// Sign changes of the shooting residual on a scan ten times finer than the
/// solver's own.
fn bracket_count(r: f64, omega: f64, c: f64) -> usize {
    let chain = ChainParams::general(0.5, 0.1).unwrap();
    let l_bar = chain.l_bar_for_omega(omega);
    let r_bar = -r * omega * omega / chain.g_abs();
    let n = 4000;
    let t_max = 20.0;
    let mut grid: Vec<f64> = (1..=10).rev().map(|k| t_max / n as f64 * 0.5f64.powi(k)).collect();
    grid.extend((1..=n).map(|k| t_max * k as f64 / n as f64));
    let values: Vec<f64> = grid.iter().map(|&t| shooting_residual(l_bar, c, r_bar, t, DEFAULT_STEPS)).collect();
    values.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
}

#[test]
fn solve_control_writes_one_file_per_root() {
    for (r, omega, c) in [(0.05, 12.0, 0.3), (0.005, 20.0, 0.5), (0.02, 25.0, 0.8)] {
        let dir = TempDir::new().unwrap();
        let control = format!("{r},{omega}");
        let o = rchain(dir.path(), &["solve", "--control", &control, "--c", &c.to_string()]);
        let expected = bracket_count(r, omega, c);
        assert!(expected >= 1, "({r}, {omega}, {c})");
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let shapes = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("shape_"))
            .count();
        assert_eq!(shapes, expected, "({r}, {omega}, {c})");
        for k in 1..=expected {
            let s: ConfigSummary = load_json(&dir.path().join(format!("summary_{k}.json"))).unwrap();
            assert!((s.r - r).abs() <= 1e-6 && s.omega == omega && s.c == c);
        }
    }
}

#[test]
fn coarse_steps_change_the_shape_slightly() {
    let fine = TempDir::new().unwrap();
    let coarse = TempDir::new().unwrap();
    assert_eq!(code(&rchain(fine.path(), &["solve", "--param", "5,1,0.5"])), 0);
    assert_eq!(code(&rchain(coarse.path(), &["solve", "--param", "5,1,0.5", "--steps", "10"])), 0);
    let a = load_shape(&fine.path().join("shape.csv")).unwrap();
    let b = load_shape(&coarse.path().join("shape.csv")).unwrap();
    assert_eq!((a.len(), b.len()), (201, 11));
    let gap = (a.u_prime.last().unwrap() - b.u_prime.last().unwrap()).abs();
    assert!(gap > 0.0 && gap < 1e-3, "{gap}");
    assert_eq!(code(&rchain(fine.path(), &["solve", "--param", "5,1,0.5", "--steps", "2"])), 1);
}

#[test]
fn solve_without_a_root_exits_two() {
    let dir = TempDir::new().unwrap();
    let o = rchain(dir.path(), &["solve", "--control", "5,12", "--c", "0.3"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn solve_rejects_nonpositive_length() {
    let dir = TempDir::new().unwrap();
    let o = rchain(dir.path(), &["solve", "--param", "0,1,0.5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("L_bar must be positive"), "{}", stderr(&o));
}

#[test]
fn yarn_flag_mirrors_heights_only() {
    let general = TempDir::new().unwrap();
    let yarn = TempDir::new().unwrap();
    assert_eq!(code(&rchain(general.path(), &["solve", "--param", "5,2,0.2"])), 0);
    assert_eq!(code(&rchain(yarn.path(), &["--gravity", "yarn", "solve", "--param", "5,2,0.2"])), 0);
    let a = load_shape(&general.path().join("shape.csv")).unwrap();
    let b = load_shape(&yarn.path().join("shape.csv")).unwrap();
    assert_eq!((&a.s, &a.u, &a.u_prime, &a.rho, &a.tension), (&b.s, &b.u, &b.u_prime, &b.rho, &b.tension));
    assert!(a.z.iter().zip(&b.z).all(|(p, q)| *p == -*q));
}

#[test]
fn map_smoke_records_link_count() {
    let dir = TempDir::new().unwrap();
    let o = rchain(dir.path(), &["map", "--l-bar", "2,4", "--t-bar", "1,2", "--c", "0.2,0.4", "--resolution", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let map = load_map(&dir.path().join("map.csv")).unwrap();
    assert_eq!(map.records.len(), 8);
    let meta = fs::read_to_string(dir.path().join("map.meta.json")).unwrap();
    assert!(meta.contains("\"link_count\": 10"));
}

#[test]
fn map_slice_is_deterministic() {
    let args = ["map", "--l-bar", "1,10", "--c", "0.1,0.6", "--resolution", "4", "--slice", "T_bar=1"];
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&rchain(a.path(), &args)), 0);
    let mut parallel = args.to_vec();
    parallel.extend(["--jobs", "3"]);
    assert_eq!(code(&rchain(b.path(), &parallel)), 0);
    let first = fs::read(a.path().join("map.csv")).unwrap();
    assert_eq!(first, fs::read(b.path().join("map.csv")).unwrap());
    let map = load_map(&a.path().join("map.csv")).unwrap();
    assert_eq!(map.records.len(), 16);
    assert!(map.records.iter().all(|r| r.t_bar == 1.0));
}

#[test]
fn map_rejects_bad_bounds_and_resolution() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&rchain(dir.path(), &["map", "--l-bar", "5,1", "--resolution", "2"])), 1);
    assert_eq!(code(&rchain(dir.path(), &["map", "--c", "0.2,1.2", "--resolution", "2"])), 1);
    assert_eq!(code(&rchain(dir.path(), &["map", "--resolution", "1"])), 1);
}

#[test]
fn plan_with_goal_at_start_is_trivial() {
    let dir = TempDir::new().unwrap();
    small_map(dir.path());
    let o = rchain(dir.path(), &["plan", "--start", "3,1,0.4", "--goal", "3,1,0.4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan = load_plan(&dir.path().join("plan.json")).unwrap();
    assert_eq!(plan.nodes.len(), 1);
    assert_eq!(plan.cost, 0.0);
    let traj = load_trajectory(&dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.samples.iter().all(|s| s.control() == plan.nodes[0].control()));
}

#[test]
fn plan_with_infeasible_limits_exits_two() {
    let dir = TempDir::new().unwrap();
    small_map(dir.path());
    let config = dir.path().join("tight.toml");
    fs::write(&config, "[limits]\nr_range = [0.0, 0.001]\n").unwrap();
    let o = rchain(dir.path(), &["--config", config.to_str().unwrap(), "plan", "--goal-mode", "2"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn plan_rejects_a_malformed_map() {
    let dir = TempDir::new().unwrap();
    small_map(dir.path());
    let path = dir.path().join("map.csv");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace("true", "maybe")).unwrap();
    let o = rchain(dir.path(), &["plan", "--goal-mode", "2"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("malformed map"));
}

fn write_constant_trajectory(path: &Path, r: f64, omega: f64, h: f64, duration: f64) {
    fs::write(path, format!("t,r,omega,h\n0.0,{r},{omega},{h}\n{duration},{r},{omega},{h}\n")).unwrap();
}

#[test]
fn simulated_rest_stays_in_mode_one() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("rest.csv");
    write_constant_trajectory(&traj, 0.0, 0.5, 0.5, 1.0);
    let o = rchain(dir.path(), &["simulate", "--trajectory", traj.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("mode.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], 1);
    assert_eq!(report["steady"], true);
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,node_index,x,y,z,vx,vy,vz\n"));
}

#[test]
fn oversized_step_exits_one_with_the_failure_time() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("spin.csv");
    write_constant_trajectory(&traj, 0.0, 2.0, 0.45, 1.0);
    let o = rchain(dir.path(), &["simulate", "--trajectory", traj.to_str().unwrap(), "--dt", "0.00125"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("blew up at t ="), "{}", stderr(&o));
}

#[test]
fn perturbed_runs_repeat_under_a_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let traj = a.path().join("spin.csv");
    write_constant_trajectory(&traj, 0.02, 6.0, 0.49, 0.5);
    let args = ["--seed", "3", "simulate", "--trajectory", traj.to_str().unwrap(), "--perturb", "0.001", "--settle", "0.5"];
    assert_eq!(code(&rchain(a.path(), &args)), 0);
    assert_eq!(code(&rchain(b.path(), &args)), 0);
    assert_eq!(fs::read(a.path().join("trace.csv")).unwrap(), fs::read(b.path().join("trace.csv")).unwrap());
}

#[test]
fn unknown_config_keys_exit_one() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[chain]\nlenght = 1.0\n").unwrap();
    let o = rchain(dir.path(), &["--config", config.to_str().unwrap(), "solve", "--param", "1,1,0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn help_lists_every_flag_with_units() {
    let dir = TempDir::new().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("solve", &["--param", "--control", "--c", "--steps", "(m)", "(rad/s)"]),
        ("map", &["--resolution", "--l-bar", "--t-bar", "--c", "--slice", "--jobs"]),
        ("plan", &["--map", "--start", "--goal-mode", "--goal"]),
        ("simulate", &["--trajectory", "--dt", "--integrator", "--settle", "--perturb", "step, s", "t = 0, m"]),
        ("modes", &["--shape"]),
    ];
    for (cmd, needles) in cases {
        let o = rchain(dir.path(), &[cmd, "--help"]);
        assert_eq!(code(&o), 0);
        let text = stdout(&o);
        for needle in needles.iter().chain(&["--config", "--out", "--gravity", "--seed"]) {
            assert!(text.contains(needle), "{cmd} help lacks {needle}");
        }
    }
}

#[test]
fn default_config_reaches_mode_two_from_rest() {
    let dir = TempDir::new().unwrap();
    let o = rchain(dir.path(), &["map"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = rchain(dir.path(), &["plan", "--goal-mode", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let traj = dir.path().join("trajectory.csv");
    let o = rchain(dir.path(), &["simulate", "--trajectory", traj.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("mode.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], 2);
}
