//! Metrics records and their JSON-lines file format.
//!
//! Each line is one [`MetricsRecord`] serialized as a JSON object whose keys
//! appear in struct declaration order. `schema_version` is the first key of
//! every line.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::Task;
use crate::model::{Activation, ParamCounts};
use crate::train::KeepProbs;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    /// `l_w > l_t`; nothing was trained.
    Infeasible,
    /// Training or evaluation raised an error, kept in `error`.
    Failed,
}

/// Settings a run was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub dropout: Option<KeepProbs>,
    pub clip_norm: Option<f64>,
    pub activation: Activation,
    pub augment: bool,
    pub freeze_input: bool,
    pub embed_dim: Option<usize>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
}

/// Epoch 0 is the evaluation of the freshly initialized network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_error: Option<f64>,
    pub test_loss: Option<f64>,
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema_version: u32,
    pub experiment: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub task: Task,
    pub l_w: usize,
    pub l_t: usize,
    pub hidden: usize,
    pub budget: Option<usize>,
    pub replicate: usize,
    pub base_seed: u64,
    /// Seed actually used by the run, derived from the fields above.
    pub seed: u64,
    pub config: RunEcho,
    pub params: Option<ParamCounts>,
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_secs: f64,
}

impl MetricsRecord {
    pub fn last_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.last_epoch().and_then(|e| e.error_rate)
    }

    pub fn final_test_loss(&self) -> Option<f64> {
        self.last_epoch().and_then(|e| e.test_loss)
    }
}

pub fn to_line(record: &MetricsRecord) -> Result<String> {
    serde_json::to_string(record).map_err(|e| Error::Numeric(format!("unserializable record: {e}")))
}

pub fn write_metrics(records: &[MetricsRecord], out: &mut impl Write) -> Result<()> {
    for r in records {
        let line = to_line(r)?;
        writeln!(out, "{line}").map_err(|e| Error::io("<metrics>", e))?;
    }
    Ok(())
}

pub fn emit_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_metrics(records, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetricsRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("schema version {} unsupported", rec.schema_version),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    parse_metrics(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Re-renders a metrics file with every `wall_clock_secs` set to zero.
pub fn mask_wall_clock(text: &str) -> Result<String> {
    let mut records = parse_metrics(text)?;
    for r in &mut records {
        r.wall_clock_secs = 0.0;
    }
    let mut buf = Vec::new();
    write_metrics(&records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}
