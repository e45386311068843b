//! JSON fit reports.
//!
//! Schema `resonator-loss/report`, version 1:
//!
//! ```text
//! {
//!   "schema": "resonator-loss/report",
//!   "schema_version": 1,
//!   "tool": { "name": "...", "version": "..." },
//!   "command": "fit-sweep",
//!   "settings": { "model": "tls", ... },
//!   "inputs": [ { "path": "...", "sha256": "..." } ],
//!   "fits": [ {
//!       "label": "...", "kind": "linear" | "nonlinear" | "tls",
//!       "instrument_power_dbm": -80.0 | null,
//!       "params": { name: value }, "std_errors": { name: value },
//!       "residual_rms": ..., "n_points": ..., "converged": ..., "iterations": ...,
//!       "diagnostics": { "nonlinear_suspected": false, "bifurcated": false, ... },
//!       "extras": { name: value },
//!       "excluded": false, "note": null
//!   } ],
//!   "summary": { name: value },
//!   "notes": [ "..." ]
//! }
//! ```
//!
//! Finite numbers are written in shortest round-trip form and parse back
//! bit-identical. NaN and infinities (unidentified errors, failed fits) are
//! written as `null`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, sha256_file, write_atomic};
use crate::error::{Error, Result};
use crate::fit_report::{Diagnostics, FitReport, ParamSet};

pub const SCHEMA: &str = "resonator-loss/report";
pub const SCHEMA_VERSION: u32 = 1;

/// A number that may be missing; non-finite values are stored as `None`.
pub type Num = Option<f64>;

pub fn num(x: f64) -> Num {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Linear,
    Nonlinear,
    Tls,
}

/// One fit in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub label: String,
    pub kind: FitKind,
    pub instrument_power_dbm: Num,
    pub params: BTreeMap<String, Num>,
    pub std_errors: BTreeMap<String, Num>,
    pub residual_rms: Num,
    pub n_points: usize,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Diagnostics,
    pub extras: BTreeMap<String, Num>,
    #[serde(default)]
    pub excluded: bool,
    #[serde(default)]
    pub note: Option<String>,
}

impl ReportEntry {
    pub fn from_fit<P: ParamSet>(label: impl Into<String>, kind: FitKind, fit: &FitReport<P>) -> Self {
        let names = P::names();
        Self {
            label: label.into(),
            kind,
            instrument_power_dbm: None,
            params: names
                .iter()
                .zip(fit.params.values())
                .map(|(n, v)| (n.to_string(), num(v)))
                .collect(),
            std_errors: names
                .iter()
                .zip(&fit.std_errors)
                .map(|(n, v)| (n.to_string(), num(*v)))
                .collect(),
            residual_rms: num(fit.residual_rms),
            n_points: fit.n_points,
            converged: fit.converged,
            iterations: fit.iterations,
            diagnostics: fit.diagnostics,
            extras: fit.extras.iter().map(|(k, v)| (k.clone(), num(*v))).collect(),
            excluded: false,
            note: None,
        }
    }

    pub fn at_power(mut self, power_dbm: f64) -> Self {
        self.instrument_power_dbm = num(power_dbm);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub command: String,
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    pub fits: Vec<ReportEntry>,
    #[serde(default)]
    pub summary: BTreeMap<String, Num>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            schema: SCHEMA.into(),
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo::default(),
            command: command.into(),
            settings: BTreeMap::new(),
            inputs: Vec::new(),
            fits: Vec::new(),
            summary: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Writes a report atomically.
pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    write_atomic(path, report.to_json().as_bytes())
}

/// Reads a report and checks its schema tag.
pub fn read_report(path: &Path) -> Result<Report> {
    let text = read_text(path)?;
    let report = Report::from_json(&text).map_err(|e| {
        Error::Parse(crate::error::ParseError {
            path: Some(path.to_path_buf()),
            line: e.line(),
            column: Some(e.column()),
            kind: crate::error::ParseErrorKind::InvalidValue(e.to_string()),
        })
    })?;
    if report.schema != SCHEMA || report.schema_version > SCHEMA_VERSION {
        return Err(Error::Config {
            key: "schema".into(),
            reason: format!(
                "unsupported report schema {} v{} (expected {SCHEMA} <= v{SCHEMA_VERSION})",
                report.schema, report.schema_version
            ),
        });
    }
    Ok(report)
}
