//! Append-only JSON-lines metrics.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsRecord {
    pub step: u64,
    pub phase: String,
    /// `vkt` or `bct`; set on evaluation records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Training environments joined with `+`, e.g. `planar3+planar4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<String>,
    /// Robot a head-training record belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub success_rate: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_precision: Option<f64>,
    pub wall_clock: f64,
    pub seed: u64,
}

impl MetricsRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some((env, r)) = self.success_rate.iter().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
            return Err(HarnessError::Validation(format!("success rate {r} for {env} outside [0, 1]")));
        }
        if self.success_length.is_some_and(|l| !(0.0..=3.0).contains(&l)) {
            return Err(HarnessError::Validation(format!("success length {:?} outside [0, 3]", self.success_length)));
        }
        Ok(())
    }

    /// The record with its wall-clock time zeroed, for reproducibility comparisons.
    pub fn without_time(&self) -> MetricsRecord {
        MetricsRecord { wall_clock: 0.0, ..self.clone() }
    }
}

/// The single writer of a metrics file.
pub struct MetricsWriter {
    path: PathBuf,
    file: File,
}

impl MetricsWriter {
    pub fn append(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(MetricsWriter { path: path.to_path_buf(), file })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        record.validate()?;
        let line = serde_json::to_string(record).map_err(|e| HarnessError::Validation(e.to_string()))?;
        writeln!(self.file, "{line}").map_err(|e| HarnessError::io(&self.path, e))
    }
}

/// Parses a metrics file; a malformed line is reported with its 1-based number.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetricsRecord = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Validation(format!("{}:{}: malformed metrics line: {e}", path.display(), i + 1)))?;
        rec.validate().map_err(|e| HarnessError::Validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
