//! File formats shared by the command-line tools.
//!
//! Shapes are written with 12 significant digits. Every other table uses the
//! shortest decimal form that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{ChainParams, Configuration, ShapeSamples};
use crate::planner::{ControlTrajectory, Plan, TrajectorySample};
use crate::simulator::SimTrace;
use crate::stability::{GridRecord, GridSpec, LumpedModelParams, StabilityMap};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

pub const SHAPE_HEADER: [&str; 6] = ["s", "u", "u_prime", "rho", "z", "F"];
pub const TRACE_HEADER: [&str; 8] = ["t", "node_index", "x", "y", "z", "vx", "vy", "vz"];
pub const MAP_HEADER: [&str; 9] = ["L_bar", "T_bar", "c", "lambda_max", "mode", "r", "omega", "h", "equilibrium_ok"];
pub const TRAJECTORY_HEADER: [&str; 4] = ["t", "r", "omega", "h"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `header` even when `rows` is empty.
fn write_rows<W: Write, T: Serialize>(writer: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Shape columns as read back from a CSV file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapeTable {
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    pub rho: Vec<f64>,
    pub z: Vec<f64>,
    pub tension: Vec<f64>,
}

impl ShapeTable {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

impl From<&ShapeSamples> for ShapeTable {
    fn from(shape: &ShapeSamples) -> Self {
        Self {
            s: shape.s.clone(),
            u: shape.u.clone(),
            u_prime: shape.u_prime.clone(),
            rho: shape.rho.clone(),
            z: shape.z.clone(),
            tension: shape.tension.clone(),
        }
    }
}

pub fn write_shape_csv<W: Write>(writer: W, shape: &ShapeTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SHAPE_HEADER)?;
    for i in 0..shape.len() {
        w.write_record([
            sig12(shape.s[i]),
            sig12(shape.u[i]),
            sig12(shape.u_prime[i]),
            sig12(shape.rho[i]),
            sig12(shape.z[i]),
            sig12(shape.tension[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_shape_csv<R: Read>(reader: R) -> Result<ShapeTable> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(SHAPE_HEADER) {
        return Err(IoError::Format(format!(
            "shape header must be {}, got {}",
            SHAPE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = ShapeTable::default();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut vals = [0.0; 6];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = rec.get(k).unwrap_or("");
            *v = field
                .trim()
                .parse()
                .map_err(|_| IoError::Format(format!("row {}: bad {} value {field:?}", line + 1, SHAPE_HEADER[k])))?;
        }
        out.s.push(vals[0]);
        out.u.push(vals[1]);
        out.u_prime.push(vals[2]);
        out.rho.push(vals[3]);
        out.z.push(vals[4]);
        out.tension.push(vals[5]);
    }
    Ok(out)
}

pub fn save_shape(path: &Path, shape: &ShapeTable) -> Result<()> {
    write_shape_csv(create(path)?, shape)
}

pub fn load_shape(path: &Path) -> Result<ShapeTable> {
    read_shape_csv(open(path)?)
}

/// Scalar summary of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub omega: f64,
    #[serde(rename = "T")]
    pub tension_t: f64,
    pub mode: u32,
    pub r: f64,
    pub h: f64,
    #[serde(rename = "L_bar")]
    pub l_bar: f64,
    #[serde(rename = "T_bar")]
    pub t_bar: f64,
    pub c: f64,
}

impl From<&Configuration> for ConfigSummary {
    fn from(config: &Configuration) -> Self {
        Self {
            omega: config.omega,
            tension_t: config.tension_t,
            mode: config.mode,
            r: config.control.r,
            h: config.control.h,
            l_bar: config.point.l_bar,
            t_bar: config.point.t_bar,
            c: config.point.c,
        }
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Sidecar describing how a stability map was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    /// Lumped links `N`.
    pub link_count: usize,
    pub grid: GridSpec,
    pub model: LumpedModelParams,
    pub chain: ChainParams,
    pub rows: usize,
}

impl MapMetadata {
    pub fn of(map: &StabilityMap) -> Self {
        Self {
            link_count: map.model.link_count,
            grid: map.grid,
            model: map.model,
            chain: map.chain,
            rows: map.records.len(),
        }
    }
}

/// Sidecar path for a map CSV: `map.csv` pairs with `map.meta.json`.
pub fn map_metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn write_map_csv<W: Write>(writer: W, records: &[GridRecord]) -> Result<()> {
    write_rows(writer, &MAP_HEADER, records)
}

pub fn read_map_csv<R: Read>(reader: R) -> Result<Vec<GridRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Writes the map CSV and its metadata sidecar.
pub fn save_map(path: &Path, map: &StabilityMap) -> Result<()> {
    let mut w = create(path)?;
    write_map_csv(&mut w, &map.records)?;
    w.flush()?;
    save_json(&map_metadata_path(path), &MapMetadata::of(map))
}

/// Reads a map CSV and its sidecar, checking that the rows match the grid.
pub fn load_map(path: &Path) -> Result<StabilityMap> {
    let records = read_map_csv(open(path)?)?;
    let meta: MapMetadata = load_json(&map_metadata_path(path))?;
    if records.len() != meta.grid.len() || records.len() != meta.rows {
        return Err(IoError::Format(format!(
            "map has {} rows but its grid describes {}",
            records.len(),
            meta.grid.len()
        )));
    }
    let points = meta.grid.points();
    for (i, (rec, p)) in records.iter().zip(&points).enumerate() {
        if rec.point() != *p {
            return Err(IoError::Format(format!("row {} is out of grid order", i + 1)));
        }
    }
    Ok(StabilityMap {
        grid: meta.grid,
        model: meta.model,
        chain: meta.chain,
        records,
    })
}

pub fn save_plan(path: &Path, plan: &Plan) -> Result<()> {
    save_json(path, plan)
}

pub fn load_plan(path: &Path) -> Result<Plan> {
    load_json(path)
}

pub fn write_trajectory_csv<W: Write>(writer: W, traj: &ControlTrajectory) -> Result<()> {
    write_rows(writer, &TRAJECTORY_HEADER, &traj.samples)
}

pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<ControlTrajectory> {
    let mut r = csv::Reader::from_reader(reader);
    let samples = r.deserialize::<TrajectorySample>().collect::<Result<Vec<_>, _>>()?;
    Ok(ControlTrajectory { samples })
}

pub fn save_trajectory(path: &Path, traj: &ControlTrajectory) -> Result<()> {
    write_trajectory_csv(create(path)?, traj)
}

pub fn load_trajectory(path: &Path) -> Result<ControlTrajectory> {
    read_trajectory_csv(open(path)?)
}

/// One node of one trace sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub node_index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

/// Flattens a trace to rows, nodes inner.
pub fn trace_rows(trace: &SimTrace) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for s in &trace.samples {
        for (i, (p, v)) in s.positions.iter().zip(&s.velocities).enumerate() {
            rows.push(TraceRow {
                t: s.t,
                node_index: i,
                x: p.x,
                y: p.y,
                z: p.z,
                vx: v.x,
                vy: v.y,
                vz: v.z,
            });
        }
    }
    rows
}

pub fn write_trace_csv<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    write_rows(writer, &TRACE_HEADER, rows)
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(IoError::Format("unexpected trace header".into()));
    }
    Ok(r.deserialize::<TraceRow>().collect::<Result<Vec<_>, _>>()?)
}

pub fn save_trace(path: &Path, trace: &SimTrace) -> Result<()> {
    write_trace_csv(create(path)?, &trace_rows(trace))
}
