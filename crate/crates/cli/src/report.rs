use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::experiments::Experiment;

/// One pass/fail criterion evaluated inside an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Measured quantity; `None` when it is not finite.
    pub value: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value ≤ threshold` and the value is finite.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value: finite(value), threshold, passed: value.is_finite() && value <= threshold }
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value: finite(value), threshold, passed: value.is_finite() && value >= threshold }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Plot data written as `<name>.csv`.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// Everything an experiment produces.
#[derive(Clone, Debug)]
pub struct Report {
    pub experiment: Experiment,
    pub seed: u64,
    /// Fully resolved parameters, defaults included.
    pub params: Value,
    pub metrics: Map<String, Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Contents of `results.json`; free of timestamps so repeated runs with
    /// the same configuration are byte-identical.
    pub fn results_json(&self) -> Value {
        json!({
            "experiment": self.experiment.name(),
            "seed": self.seed,
            "params": self.params,
            "metrics": self.metrics,
            "checks": self.checks,
            "passed": self.passed(),
        })
    }

    /// Writes `results.json`, one CSV per table and `manifest.json` into
    /// `dir`, returning the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = vec![];
        let results = dir.join("results.json");
        std::fs::write(&results, serde_json::to_string_pretty(&self.results_json())? + "\n")?;
        files.push(results);
        for t in &self.tables {
            files.push(t.write(dir)?);
        }
        let mut hashes = Map::new();
        for f in &files {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            hashes.insert(name, Value::String(sha256_hex(&std::fs::read(f)?)));
        }
        let config = serde_json::to_vec(&json!({ "seed": self.seed, "params": self.params }))?;
        let manifest = json!({
            "experiment": self.experiment.name(),
            "seed": self.seed,
            "config_sha256": sha256_hex(&config),
            "files": hashes,
            "created": chrono::Utc::now().to_rfc3339(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        let mpath = dir.join("manifest.json");
        std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")?;
        files.push(mpath);
        Ok(files)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn checks_treat_nan_as_failure() {
        assert!(!Check::at_most("e", f64::NAN, 1.0).passed);
        assert!(Check::at_most("e", 0.5, 1.0).passed);
        assert!(!Check::at_least("a", 0.5, 0.9).passed);
        assert_eq!(Check::at_most("e", f64::INFINITY, 1.0).value, None);
    }
}
