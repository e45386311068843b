//! Sweep manifests: which trace files make up a power sweep.
//!
//! ```toml
//! label = "res1"
//! attenuation_db = 74.0
//! temperature_k = 0.01
//!
//! [[trace]]
//! path = "trace_00.csv"   # relative to the manifest
//! power_dbm = -100.0
//!
//! [[trace]]
//! path = "trace_01.s2p"   # Touchstone; metadata comes from the manifest
//! power_dbm = -90.0
//! ```
//!
//! The manifest is authoritative: CSV metadata that disagrees with it is an
//! error.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv::parse_csv_trace;
use super::touchstone::{is_touchstone_path, parse_touchstone};
use super::{read_text, toml_parse_error, write_atomic};
use crate::error::{Error, Result};
use crate::model::{FrequencyTrace, TraceMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestTrace {
    pub path: PathBuf,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    #[serde(default)]
    pub label: String,
    pub attenuation_db: f64,
    pub temperature_k: f64,
    #[serde(rename = "trace", default)]
    pub traces: Vec<ManifestTrace>,
}

fn config(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

impl SweepManifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.attenuation_db.is_finite() && self.attenuation_db >= 0.0) {
            return Err(config(
                "attenuation_db",
                format!("must be finite and >= 0, got {}", self.attenuation_db),
            ));
        }
        if !(self.temperature_k.is_finite() && self.temperature_k > 0.0) {
            return Err(config(
                "temperature_k",
                format!("must be finite and > 0, got {}", self.temperature_k),
            ));
        }
        if self.traces.is_empty() {
            return Err(config("trace", "manifest lists no traces"));
        }
        let mut seen = HashSet::new();
        for (k, t) in self.traces.iter().enumerate() {
            if !t.power_dbm.is_finite() {
                return Err(config(format!("trace[{k}].power_dbm"), "must be finite"));
            }
            if !seen.insert(&t.path) {
                return Err(config(
                    format!("trace[{k}].path"),
                    format!("duplicate path {}", t.path.display()),
                ));
            }
        }
        Ok(())
    }

    pub fn meta_for(&self, k: usize) -> TraceMeta {
        TraceMeta {
            instrument_power_dbm: self.traces[k].power_dbm,
            attenuation_db: self.attenuation_db,
            temperature_k: self.temperature_k,
            label: self.label.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Parses manifest text; trace paths are returned as written.
pub fn parse_manifest_str(text: &str, path: Option<&Path>) -> Result<SweepManifest> {
    let m: SweepManifest = toml::from_str(text).map_err(|e| toml_parse_error(text, path, &e))?;
    m.validate()?;
    Ok(m)
}

/// Reads a manifest and resolves relative trace paths against its directory.
pub fn load_manifest(path: &Path) -> Result<SweepManifest> {
    let text = read_text(path)?;
    let mut m = parse_manifest_str(&text, Some(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for t in &mut m.traces {
        if t.path.is_relative() {
            t.path = base.join(&t.path);
        }
    }
    Ok(m)
}

pub fn write_manifest(manifest: &SweepManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    write_atomic(path, manifest.to_toml().as_bytes())
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Loads trace `k` of the manifest. CSV metadata must agree with the
/// manifest; errors are tagged with the power and file.
pub fn load_trace(manifest: &SweepManifest, k: usize) -> Result<FrequencyTrace> {
    let entry = &manifest.traces[k];
    let meta = manifest.meta_for(k);
    let tag = |e: Error| Error::AtPower {
        power_dbm: entry.power_dbm,
        path: Some(entry.path.clone()),
        source: Box::new(e),
    };
    if is_touchstone_path(&entry.path) {
        return parse_touchstone(&entry.path, (2, 1), meta).map_err(tag);
    }
    let mut trace = parse_csv_trace(&entry.path).map_err(tag)?;
    let checks = [
        ("power_dbm", trace.meta.instrument_power_dbm, meta.instrument_power_dbm),
        ("attenuation_db", trace.meta.attenuation_db, meta.attenuation_db),
        ("temperature_k", trace.meta.temperature_k, meta.temperature_k),
    ];
    for (key, file, listed) in checks {
        if !same(file, listed) {
            return Err(tag(config(
                format!("trace[{k}].{key}"),
                format!("file says {file}, manifest says {listed}"),
            )));
        }
    }
    if trace.meta.label.is_empty() {
        trace.meta.label = meta.label;
    }
    Ok(trace)
}

/// Loads every trace of the manifest, in manifest order.
pub fn load_traces(manifest: &SweepManifest) -> Result<Vec<FrequencyTrace>> {
    (0..manifest.traces.len()).map(|k| load_trace(manifest, k)).collect()
}
