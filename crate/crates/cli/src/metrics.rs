//! On-disk run artifacts: metrics CSV, transfer-event JSON lines, summary JSON.

use std::io::Write;
use std::path::Path;

use amto_core::orchestrator::{CheckpointRecord, StopReason};
use amto_core::transfer::TransferEvent;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const METRICS_HEADER: [&str; 12] = [
    "run_id",
    "seed",
    "task_id",
    "checkpoint",
    "global_iteration",
    "train_loss",
    "master_val_loss",
    "slave_val_loss",
    "val_accuracy",
    "lr",
    "transfer_source",
    "transfer_accepted",
];

/// One task at one checkpoint. Optional fields are written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: u64,
    pub seed: u64,
    pub task_id: usize,
    pub checkpoint: u64,
    pub global_iteration: u64,
    pub train_loss: f64,
    pub master_val_loss: Option<f64>,
    pub slave_val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub lr: f64,
    pub transfer_source: Option<usize>,
    pub transfer_accepted: Option<bool>,
}

impl MetricsRow {
    pub fn from_record(run_id: u64, seed: u64, r: &CheckpointRecord) -> Self {
        Self {
            run_id,
            seed,
            task_id: r.task_id,
            checkpoint: r.checkpoint,
            global_iteration: r.global_iteration,
            train_loss: r.train_loss,
            master_val_loss: r.master_val_loss,
            slave_val_loss: r.slave_val_loss,
            val_accuracy: r.val_accuracy,
            lr: r.lr,
            transfer_source: r.transfer_source,
            transfer_accepted: r.transfer_accepted,
        }
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    writer.write_record(METRICS_HEADER).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(CliError::io(path))?;
    Ok(())
}

/// Reads and schema-checks a metrics CSV. A file with no data rows is an error.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let schema = |message: String| CliError::Schema {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    for (i, expected) in METRICS_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(found) if found == *expected => {}
            Some(found) => return Err(schema(format!("column {i} is '{found}', expected '{expected}'"))),
            None => return Err(schema(format!("missing column '{expected}'"))),
        }
    }
    if header.len() > METRICS_HEADER.len() {
        return Err(schema(format!("unexpected extra column '{}'", &header[METRICS_HEADER.len()])));
    }
    let mut rows = Vec::new();
    for record in reader.deserialize::<MetricsRow>() {
        let row = record.map_err(|e| {
            let column = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err
                    .field()
                    .and_then(|f| METRICS_HEADER.get(f as usize))
                    .copied()
                    .unwrap_or("?"),
                _ => "?",
            };
            let line = e.position().map_or(0, |p| p.line());
            schema(format!("line {line}, column '{column}': {e}"))
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(schema("no data rows".into()));
    }
    Ok(rows)
}

pub fn write_events(path: &Path, events: &[TransferEvent]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for e in events {
        serde_json::to_writer(&mut out, e).expect("events serialize");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(CliError::io(path))
}

/// Keys of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: u64,
    pub seed: u64,
    pub mode: String,
    pub task_count: usize,
    pub winner: usize,
    pub harmonic_accuracies: Vec<f64>,
    pub accuracy_matrix: Vec<Vec<f64>>,
    pub winner_val_loss: Option<f64>,
    pub test_accuracy: f64,
    pub stop_reason: StopReason,
    pub checkpoints: u64,
    pub transfers: usize,
    pub accepted_transfers: usize,
    pub wall_time_secs: f64,
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path).map_err(CliError::io(path))?;
    serde_json::to_writer_pretty(&mut file, summary).expect("summary serializes");
    file.write_all(b"\n").map_err(CliError::io(path))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(task: usize, slave: Option<f64>) -> MetricsRow {
        MetricsRow {
            run_id: 0,
            seed: 7,
            task_id: task,
            checkpoint: 1,
            global_iteration: 100,
            train_loss: 0.5,
            master_val_loss: Some(0.25),
            slave_val_loss: slave,
            val_accuracy: Some(0.875),
            lr: 0.001,
            transfer_source: slave.map(|_| 1),
            transfer_accepted: slave.map(|_| false),
        }
    }

    #[test]
    fn golden_header_and_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics(&path, &[row(0, None), row(1, Some(0.3))]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "run_id,seed,task_id,checkpoint,global_iteration,train_loss,master_val_loss,\
             slave_val_loss,val_accuracy,lr,transfer_source,transfer_accepted"
        );
        assert_eq!(lines[1], "0,7,0,1,100,0.5,0.25,,0.875,0.001,,");
        assert_eq!(lines[2], "0,7,1,1,100,0.5,0.25,0.3,0.875,0.001,1,false");
        assert_eq!(read_metrics(&path).unwrap(), vec![row(0, None), row(1, Some(0.3))]);
    }

    #[test]
    fn header_only_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics(&path, &[]).unwrap();
        assert!(matches!(read_metrics(&path), Err(CliError::Schema { .. })));
    }

    #[test]
    fn schema_errors_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "run_id,seed,task\n0,1,2\n").unwrap();
        let err = read_metrics(&path).unwrap_err().to_string();
        assert!(err.contains("task_id"), "{err}");

        write_metrics(&path, &[row(0, None)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace(",0.5,", ",abc,");
        std::fs::write(&path, text).unwrap();
        let err = read_metrics(&path).unwrap_err().to_string();
        assert!(err.contains("train_loss"), "{err}");
    }
}
