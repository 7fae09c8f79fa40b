//! Metric reports as CSV (one metric per column) and versioned JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub kind: String,
    pub metrics: Vec<Metric>,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub dataset_hash: Option<String>,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn new(kind: &str, config: serde_json::Value, config_hash: String, seed: u64) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: kind.to_string(),
            metrics: Vec::new(),
            config,
            config_hash,
            dataset_hash: None,
            seed,
            timestamp,
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
        });
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn to_csv(&self) -> String {
        let header: Vec<&str> = self.metrics.iter().map(|m| m.name.as_str()).collect();
        let values: Vec<String> = self.metrics.iter().map(|m| m.value.to_string()).collect();
        format!("{}\n{}\n", header.join(","), values.join(","))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, self.to_csv())?;
        fs::write(&json, self.to_json()?)?;
        Ok((csv, json))
    }
}

/// Rows for parameter sweeps: the swept value first, then one column per
/// metric in the order of the first row.
pub fn sweep_csv(param: &str, rows: &[(f64, Vec<Metric>)]) -> String {
    let mut out = String::from(param);
    if let Some((_, first)) = rows.first() {
        for m in first {
            out.push(',');
            out.push_str(&m.name);
        }
    }
    out.push('\n');
    for (value, metrics) in rows {
        out.push_str(&value.to_string());
        for m in metrics {
            out.push(',');
            out.push_str(&m.value.to_string());
        }
        out.push('\n');
    }
    out
}
