//! JSON experiment reports with a CSV mirror.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::BenchProtocol;
use crate::io::reference::ReferenceValue;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Host {
    pub cpu_model: String,
    pub workers: usize,
    pub os: String,
    pub arch: String,
}

impl Host {
    pub fn detect() -> Self {
        let cpu_model = fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".to_string());
        Host {
            cpu_model,
            workers: crate::par::current_threads(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

/// One experiment's output. `complete` is false until every row is in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report<R> {
    pub schema_version: u32,
    pub tool_version: String,
    pub host: Host,
    pub protocol: Vec<BenchProtocol>,
    pub experiment: String,
    pub complete: bool,
    pub rows: Vec<R>,
    pub notes: Vec<String>,
    pub paper_reference_values: Vec<ReferenceValue>,
}

impl<R> Report<R> {
    pub fn new(experiment: &str, protocol: Vec<BenchProtocol>, paper_reference_values: Vec<ReferenceValue>) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool_version: crate::TOOL_VERSION.to_string(),
            host: Host::detect(),
            protocol,
            experiment: experiment.to_string(),
            complete: false,
            rows: Vec::new(),
            notes: Vec::new(),
            paper_reference_values,
        }
    }
}

impl<R: Serialize> Report<R> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Write via a temp file and rename so readers never see a torn file.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()? + "\n")?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Rows as CSV, header from the row's field names in declaration order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl<R: DeserializeOwned> Report<R> {
    pub fn from_json(s: &str) -> Result<Self> {
        let r: Report<R> = serde_json::from_str(s)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::Report(format!(
                "schema version {} not supported (expected {SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Round to 6 significant digits. Applied to every float before it is
/// stored in a row, so JSON and CSV carry the same decimal value.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = format!("{x:.5e}");
    s.parse().unwrap_or(x)
}
