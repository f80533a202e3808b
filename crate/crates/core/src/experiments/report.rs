use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Named columns of equal length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    /// Values of one column, if present.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    LessEq,
    GreaterEq,
}

impl Comparison {
    pub fn holds(self, measured: f64, threshold: f64) -> bool {
        match self {
            Comparison::LessEq => measured <= threshold,
            Comparison::GreaterEq => measured >= threshold,
        }
    }
}

/// A measured value checked against a threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Verdict {
    pub fn new(name: &str, measured: f64, comparison: Comparison, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            threshold,
            comparison,
            passed: comparison.holds(measured, threshold),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config: BTreeMap<String, String>,
    pub version: String,
    pub seeds: Vec<u64>,
}

/// Result of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub metrics: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Series>,
    pub verdicts: Vec<Verdict>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn new(kind: &str, config: BTreeMap<String, String>, seeds: Vec<u64>) -> Self {
        Self {
            kind: kind.to_string(),
            metrics: BTreeMap::new(),
            series: BTreeMap::new(),
            verdicts: Vec::new(),
            provenance: Provenance {
                config,
                version: env!("CARGO_PKG_VERSION").to_string(),
                seeds,
            },
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    pub fn add_series(&mut self, key: &str, s: Series) {
        self.series.insert(key.to_string(), s);
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn find_verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Writes `report.json` and one `<key>.csv` per series; returns the written paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let json = dir.join("report.json");
    fs::write(&json, report.to_json() + "\n").map_err(|e| Error::io(&json, e))?;
    written.push(json);
    for (key, s) in &report.series {
        let p = dir.join(format!("{key}.csv"));
        fs::write(&p, s.to_csv()).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
