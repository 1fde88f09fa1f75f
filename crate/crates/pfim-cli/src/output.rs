//! CSV and manifest serialization. The CSV bodies are the reproducible part
//! of a run: identical commands must produce byte-identical files, so every
//! float goes through one formatter and anything time-dependent is kept out
//! of them and written to the manifest instead.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// 17 significant digits round-trips every f64 bit pattern.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> io::Result<()> {
    let mut text = String::with_capacity(header.len() + 1 + rows.len() * 64);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)
}

/// Everything needed to rerun and audit a command: inputs on one side,
/// result summary and wall-clock phases on the other. Timings are the only
/// run-to-run varying content, which is why they live here and not in the
/// CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub system: String,
    pub version: String,
    /// Full parameter set after --param overrides.
    pub parameters: BTreeMap<String, f64>,
    pub config: BTreeMap<String, Value>,
    pub results: BTreeMap<String, Value>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, system: &str) -> Self {
        Self {
            command: command.to_string(),
            system: system.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: BTreeMap::new(),
            config: BTreeMap::new(),
            results: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn set_config(&mut self, key: &str, value: impl Into<Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    pub fn set_result(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    pub fn set_timing(&mut self, phase: &str, ms: f64) {
        self.timings_ms.insert(phase.to_string(), ms);
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text)
    }
}
