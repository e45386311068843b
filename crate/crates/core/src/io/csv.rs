//! CSV trace format.
//!
//! ```text
//! # power_dbm=-80
//! # attenuation_db=74
//! # temperature_k=0.01
//! # label=res1
//! freq_hz,s21_re,s21_im
//! 4.9999e9,0.51,-0.02
//! ```
//!
//! Metadata lines start with `#` and carry `key=value`; `#` lines without
//! `=` are comments. `power_dbm`, `attenuation_db` and `temperature_k` are
//! required, `label` is optional and unknown keys are ignored. Blank lines
//! are skipped and `\r\n` line endings are accepted. Writers emit `\n` and
//! 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::{fmt17, read_text, write_atomic};
use crate::error::{ParseError, ParseErrorKind, Result};
use crate::model::{FrequencyTrace, TraceMeta};

pub const HEADER: &str = "freq_hz,s21_re,s21_im";
const REQUIRED: [&str; 3] = ["power_dbm", "attenuation_db", "temperature_k"];

/// Reads a CSV trace from disk.
pub fn parse_csv_trace(path: &Path) -> Result<FrequencyTrace> {
    let text = read_text(path)?;
    Ok(parse_csv_str(&text, Some(path))?)
}

/// Parses CSV text; `path` only labels errors.
pub fn parse_csv_str(text: &str, path: Option<&Path>) -> std::result::Result<FrequencyTrace, ParseError> {
    let err = |line: usize, column: Option<usize>, kind: ParseErrorKind| ParseError {
        path: path.map(Path::to_path_buf),
        line,
        column,
        kind,
    };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.trim().is_empty() {
        return Err(err(1, None, ParseErrorKind::Empty));
    }

    let mut meta = TraceMeta {
        label: String::new(),
        ..TraceMeta::default()
    };
    let mut seen: [Option<usize>; 3] = [None; 3];
    let mut header_line = None;
    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        last_line = line_no;
        if let Some(rest) = line.strip_prefix('#') {
            if header_line.is_some() {
                return Err(err(
                    line_no,
                    Some(1),
                    ParseErrorKind::MalformedMetadata("metadata after the column header".into()),
                ));
            }
            let Some((key, value)) = rest.split_once('=') else {
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            let value_col = line.find('=').map(|i| i + 2);
            if key == "label" {
                meta.label = value.to_string();
                continue;
            }
            let Some(slot) = REQUIRED.iter().position(|k| *k == key) else {
                continue;
            };
            if let Some(first) = seen[slot] {
                return Err(err(
                    line_no,
                    Some(2),
                    ParseErrorKind::MalformedMetadata(format!("duplicate key `{key}` (first on line {first})")),
                ));
            }
            let v: f64 = value.parse().map_err(|_| {
                err(
                    line_no,
                    value_col,
                    ParseErrorKind::MalformedMetadata(format!("`{key}` is not a number: `{value}`")),
                )
            })?;
            let valid = match slot {
                0 => v.is_finite(),
                1 => v.is_finite() && v >= 0.0,
                _ => v.is_finite() && v > 0.0,
            };
            if !valid {
                return Err(err(
                    line_no,
                    value_col,
                    ParseErrorKind::MalformedMetadata(format!("`{key}` out of range: {v}")),
                ));
            }
            match slot {
                0 => meta.instrument_power_dbm = v,
                1 => meta.attenuation_db = v,
                _ => meta.temperature_k = v,
            }
            seen[slot] = Some(line_no);
            continue;
        }

        if header_line.is_none() {
            let normalized: String = line.split(',').map(str::trim).collect::<Vec<_>>().join(",");
            if normalized != HEADER {
                return Err(err(line_no, Some(1), ParseErrorKind::MissingHeader));
            }
            header_line = Some(line_no);
            continue;
        }

        let mut values = [0.0f64; 3];
        let mut count = 0;
        let mut col = 1;
        for field in line.split(',') {
            if count == 3 {
                return Err(err(
                    line_no,
                    Some(col),
                    ParseErrorKind::MalformedRow("more than 3 fields".into()),
                ));
            }
            let trimmed = field.trim();
            let v: f64 = trimmed.parse().map_err(|_| {
                err(
                    line_no,
                    Some(col),
                    ParseErrorKind::MalformedRow(format!("not a number: `{trimmed}`")),
                )
            })?;
            if !v.is_finite() {
                return Err(err(
                    line_no,
                    Some(col),
                    ParseErrorKind::InvalidValue(format!("non-finite value `{trimmed}`")),
                ));
            }
            values[count] = v;
            count += 1;
            col += field.chars().count() + 1;
        }
        if count < 3 {
            return Err(err(
                line_no,
                Some(col),
                ParseErrorKind::MalformedRow(format!("expected 3 fields, found {count}")),
            ));
        }
        if let Some(&prev) = freqs.last() {
            if values[0] <= prev {
                return Err(err(line_no, Some(1), ParseErrorKind::NonMonotoneFrequency));
            }
        }
        freqs.push(values[0]);
        s21.push(Complex64::new(values[1], values[2]));
    }

    if let Some(missing) = REQUIRED.iter().zip(&seen).find(|(_, s)| s.is_none()) {
        return Err(err(
            header_line.unwrap_or(last_line.max(1)),
            None,
            ParseErrorKind::MissingMetadata(missing.0),
        ));
    }
    let Some(header) = header_line else {
        return Err(err(last_line.max(1), None, ParseErrorKind::MissingHeader));
    };
    if freqs.is_empty() {
        return Err(err(header, None, ParseErrorKind::Empty));
    }
    FrequencyTrace::new(freqs, s21, meta).map_err(|e| err(header, None, ParseErrorKind::InvalidValue(e.to_string())))
}

/// Serializes a trace in the CSV format.
pub fn format_csv_trace(trace: &FrequencyTrace) -> String {
    let m = &trace.meta;
    let mut out = String::with_capacity(80 * (trace.len() + 6));
    let _ = writeln!(out, "# power_dbm={}", m.instrument_power_dbm);
    let _ = writeln!(out, "# attenuation_db={}", m.attenuation_db);
    let _ = writeln!(out, "# temperature_k={}", m.temperature_k);
    if !m.label.is_empty() {
        let _ = writeln!(out, "# label={}", m.label.replace(['\n', '\r'], " "));
    }
    out.push_str(HEADER);
    out.push('\n');
    for (f, z) in trace.freqs().iter().zip(trace.s21()) {
        let _ = writeln!(out, "{},{},{}", fmt17(*f), fmt17(z.re), fmt17(z.im));
    }
    out
}

/// Writes a trace atomically.
pub fn write_csv_trace(trace: &FrequencyTrace, path: &Path) -> Result<()> {
    write_atomic(path, format_csv_trace(trace).as_bytes())
}
