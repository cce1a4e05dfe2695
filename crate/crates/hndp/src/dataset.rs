//! Demonstration datasets: a manifest, one JSON line per demonstration and
//! a CSV per trajectory.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use hndp_core::dmp::Trajectory;
use hndp_core::net::Observation;
use hndp_core::policy::Demonstration;
use serde::{Deserialize, Serialize};

use crate::error::{csv_at, io_at, Error, Result};
use crate::files;

pub const FORMAT: &str = "hndp-demos";
pub const VERSION: u32 = 1;
const RECORDS: &str = "demos.jsonl";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub task: String,
    pub count: usize,
    pub records: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    index: usize,
    region: usize,
    start: Vec<f64>,
    observation: Observation,
    trajectory: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Sample {
    t: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    ax: f64,
    ay: f64,
}

/// Writes a planar trajectory as `t,x,y,vx,vy,ax,ay` rows.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    if traj.dims != 2 {
        return Err(Error::Unsupported(format!("trajectory files hold planar paths, got {} dims", traj.dims)));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for k in 0..traj.len() {
        let s = Sample {
            t: k as f64 * traj.dt,
            x: traj.y[2 * k],
            y: traj.y[2 * k + 1],
            vx: traj.ydot[2 * k],
            vy: traj.ydot[2 * k + 1],
            ax: traj.yddot[2 * k],
            ay: traj.yddot[2 * k + 1],
        };
        w.serialize(s).map_err(csv_at(path))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Encode(e.to_string()))?;
    files::write_atomic(path, &bytes)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_at(path))?;
    let rows: Vec<Sample> = reader.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_at(path))?;
    if rows.len() < 2 {
        return Err(Error::Corrupt { path: path.to_path_buf(), message: "a trajectory needs two samples".into() });
    }
    let dt = rows[1].t - rows[0].t;
    let pick = |f: fn(&Sample) -> [f64; 2]| rows.iter().flat_map(f).collect::<Vec<f64>>();
    Trajectory::new(dt, 2, pick(|s| [s.x, s.y]), pick(|s| [s.vx, s.vy]), pick(|s| [s.ax, s.ay]))
        .map_err(|e| Error::Corrupt { path: path.to_path_buf(), message: e.to_string() })
}

/// Writes `demos` under `dir` and returns the manifest.
pub fn write_dataset(dir: &Path, task: &str, demos: &[Demonstration]) -> Result<Manifest> {
    files::create_dir(&dir.join("trajectories"))?;
    let mut lines = Vec::new();
    for (index, d) in demos.iter().enumerate() {
        let rel = format!("trajectories/demo{index:03}_region{:02}.csv", d.region);
        write_trajectory(&dir.join(&rel), &d.trajectory)?;
        let record = Record { index, region: d.region, start: d.start.clone(), observation: d.observation.clone(), trajectory: rel };
        serde_json::to_writer(&mut lines, &record).map_err(|e| Error::Encode(e.to_string()))?;
        lines.write_all(b"\n").map_err(io_at(dir))?;
    }
    files::write_atomic(&dir.join(RECORDS), &lines)?;
    let manifest = Manifest { format: FORMAT.into(), version: VERSION, task: task.into(), count: demos.len(), records: RECORDS.into() };
    let text = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Encode(e.to_string()))?;
    files::write_atomic(&dir.join(MANIFEST), &text)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<Demonstration>)> {
    let path = dir.join(MANIFEST);
    let corrupt = |path: &Path, message: String| Error::Corrupt { path: path.to_path_buf(), message };
    let manifest: Manifest =
        serde_json::from_str(&files::read_string(&path)?).map_err(|e| corrupt(&path, e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(corrupt(&path, format!("not a demonstration dataset (format {:?})", manifest.format)));
    }
    if manifest.version != VERSION {
        return Err(Error::Version { path, found: manifest.version, expected: VERSION });
    }
    let records = dir.join(&manifest.records);
    let file = fs::File::open(&records).map_err(io_at(&records))?;
    let mut demos = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_at(&records))?;
        let r: Record = serde_json::from_str(&line).map_err(|e| corrupt(&records, e.to_string()))?;
        let trajectory = read_trajectory(&dir.join(&r.trajectory))?;
        demos.push(Demonstration { region: r.region, observation: r.observation, start: r.start, trajectory });
    }
    if demos.len() != manifest.count {
        return Err(corrupt(&records, format!("{} records, manifest lists {}", demos.len(), manifest.count)));
    }
    Ok((manifest, demos))
}
