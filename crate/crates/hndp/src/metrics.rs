//! Append-only CSV metrics. Rows are written in the order they happen and
//! flushed one by one; no wall-clock fields, so reruns are byte-identical.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{csv_at, io_at, Result};
use crate::files;

/// One refinement iteration of the imitation hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub phase: String,
    pub iteration: usize,
    pub train_success: f64,
    pub heldout_success: f64,
    pub clone_loss: f64,
    pub demo_loss: f64,
    pub seed: u64,
}

/// One point of a reinforcement-learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub phase: String,
    pub env_steps: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub seed: u64,
}

/// Single-writer CSV log; the header comes from the first row's fields.
pub struct MetricsLog {
    path: PathBuf,
    writer: csv::Writer<File>,
    rows: usize,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            files::create_dir(parent)?;
        }
        let file = File::create(path).map_err(io_at(path))?;
        Ok(Self { path: path.to_path_buf(), writer: csv::Writer::from_writer(file), rows: 0 })
    }

    pub fn append<R: Serialize>(&mut self, row: &R) -> Result<()> {
        self.writer.serialize(row).map_err(csv_at(&self.path))?;
        self.writer.flush().map_err(io_at(&self.path))?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_rows<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_at(path))?;
    reader.deserialize().collect::<std::result::Result<Vec<R>, _>>().map_err(csv_at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            IterationRow { phase: "refine".into(), iteration: 1, train_success: 0.1, heldout_success: 1.0 / 3.0, clone_loss: 1e-7, demo_loss: 2.5, seed: 4 },
            IterationRow { phase: "refine".into(), iteration: 2, train_success: 0.7, heldout_success: 0.0, clone_loss: 0.3, demo_loss: f64::MIN_POSITIVE, seed: 4 },
        ];
        let mut log = MetricsLog::create(&path).unwrap();
        for r in &rows {
            log.append(r).unwrap();
        }
        assert_eq!(log.rows(), 2);
        assert_eq!(read_rows::<IterationRow>(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("phase,iteration,train_success,heldout_success,clone_loss,demo_loss,seed\n"));
    }
}
