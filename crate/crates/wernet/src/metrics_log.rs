//! Metric logs as CSV with the columns
//! `epoch,step,loss,cosine_similarity,lr_voxel,lr_encoder,wall_ms`.
//!
//! `step` counts optimizer steps (or ART sweeps) completed. Columns that do
//! not apply are left empty.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wernet_core::art::ArtSweep;
use wernet_core::train::{RecordKind, TrainRecord};

use crate::error::{io_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub cosine_similarity: Option<f64>,
    pub lr_voxel: Option<f64>,
    pub lr_encoder: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl From<&TrainRecord> for LogRow {
    fn from(r: &TrainRecord) -> Self {
        Self {
            epoch: r.epoch,
            step: match r.kind {
                RecordKind::Step => r.step + 1,
                RecordKind::Epoch => r.step,
            },
            loss: r.loss,
            cosine_similarity: r.similarity,
            lr_voxel: Some(r.lr_voxel),
            lr_encoder: Some(r.lr_encoder),
            wall_ms: Some(r.wall_ms),
        }
    }
}

impl From<&ArtSweep> for LogRow {
    fn from(s: &ArtSweep) -> Self {
        Self {
            epoch: s.sweep,
            step: s.sweep as u64 + 1,
            loss: s.residual,
            cosine_similarity: s.similarity,
            lr_voxel: None,
            lr_encoder: None,
            wall_ms: None,
        }
    }
}

pub fn write_log(path: &Path, rows: impl IntoIterator<Item = LogRow>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut any = false;
    for row in rows {
        w.serialize(row)?;
        any = true;
    }
    if !any {
        w.write_record(["epoch", "step", "loss", "cosine_similarity", "lr_voxel", "lr_encoder", "wall_ms"])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Epoch rows of a training history.
pub fn epoch_rows(history: &[TrainRecord]) -> impl Iterator<Item = LogRow> + '_ {
    history.iter().filter(|r| r.kind == RecordKind::Epoch).map(LogRow::from)
}

/// Per-step rows of a training history.
pub fn step_rows(history: &[TrainRecord]) -> impl Iterator<Item = LogRow> + '_ {
    history.iter().filter(|r| r.kind == RecordKind::Step).map(LogRow::from)
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
