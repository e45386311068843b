//! Touchstone v1 import (`.s1p`, `.s2p`, ...).
//!
//! The option line `# <unit> S <RI|MA|DB> R <z0>` sets the frequency unit
//! and number format; missing fields default to `GHz S MA R 50`. `!` starts
//! a comment anywhere on a line. A record holds the frequency followed by
//! `2 N²` numbers and may span several lines. Two-port records are ordered
//! `S11 S21 S12 S22`, larger networks row by row. A two-port noise-parameter
//! block (frequency restarting, five values per line) ends the network data.
//!
//! The format carries no drive metadata, so the caller supplies it.

use std::path::Path;

use num_complex::Complex64;

use super::read_text;
use crate::error::{Error, ParseError, ParseErrorKind, Result};
use crate::model::{FrequencyTrace, TraceMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    RealImag,
    MagAngle,
    DbAngle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionLine {
    /// Multiplier from file units to Hz.
    pub freq_scale: f64,
    pub format: DataFormat,
    pub reference_impedance: f64,
}

impl Default for OptionLine {
    fn default() -> Self {
        Self {
            freq_scale: 1e9,
            format: DataFormat::MagAngle,
            reference_impedance: 50.0,
        }
    }
}

impl DataFormat {
    fn to_complex(self, a: f64, b: f64) -> Complex64 {
        match self {
            DataFormat::RealImag => Complex64::new(a, b),
            DataFormat::MagAngle => Complex64::from_polar(a, b.to_radians()),
            DataFormat::DbAngle => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }
}

/// Port count from a `.sNp` extension; 2 when the extension says nothing.
pub fn ports_from_path(path: &Path) -> usize {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .and_then(|e| e.strip_prefix('s')?.strip_suffix('p')?.parse().ok())
        .filter(|&n: &usize| n >= 1)
        .unwrap_or(2)
}

/// Whether the extension is `.sNp`.
pub fn is_touchstone_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| {
            let e = e.to_ascii_lowercase();
            e.len() >= 3 && e.starts_with('s') && e.ends_with('p') && e[1..e.len() - 1].parse::<usize>().is_ok()
        })
        .unwrap_or(false)
}

/// Reads S-parameter `port_pair = (out, in)` from a Touchstone file, e.g.
/// `(2, 1)` for S21.
pub fn parse_touchstone(path: &Path, port_pair: (usize, usize), meta: TraceMeta) -> Result<FrequencyTrace> {
    let text = read_text(path)?;
    parse_touchstone_str(&text, ports_from_path(path), port_pair, meta, Some(path))
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

/// Parses Touchstone text for an `n_ports` network; `path` only labels
/// errors.
pub fn parse_touchstone_str(
    text: &str,
    n_ports: usize,
    port_pair: (usize, usize),
    meta: TraceMeta,
    path: Option<&Path>,
) -> Result<FrequencyTrace> {
    let (out, inp) = port_pair;
    if !(1..=n_ports).contains(&out) || !(1..=n_ports).contains(&inp) {
        return Err(Error::Config {
            key: "port_pair".into(),
            reason: format!("S{out}{inp} does not exist in a {n_ports}-port file"),
        });
    }
    let index = if n_ports == 2 {
        // S11 S21 S12 S22
        (inp - 1) * 2 + (out - 1)
    } else {
        (out - 1) * n_ports + (inp - 1)
    };
    let per_record = 1 + 2 * n_ports * n_ports;

    let err = |line: usize, column: Option<usize>, kind: ParseErrorKind| ParseError {
        path: path.map(Path::to_path_buf),
        line,
        column,
        kind,
    };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let mut options: Option<OptionLine> = None;
    let mut tokens: Vec<Token> = Vec::with_capacity(per_record);
    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    let mut last_line = 1;
    let mut seen_data = false;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let content = line.split('!').next().unwrap_or("");
        let trimmed = content.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        last_line = line_no;
        let indent = content.len() - trimmed.len();
        if trimmed.starts_with('[') {
            let keyword = trimmed.split(']').next().unwrap_or(trimmed);
            return Err(err(
                line_no,
                Some(indent + 1),
                ParseErrorKind::UnsupportedFormat(format!("Touchstone v2 keyword `{keyword}]`")),
            )
            .into());
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if seen_data {
                return Err(err(
                    line_no,
                    Some(indent + 1),
                    ParseErrorKind::MalformedOptionLine("option line after network data".into()),
                )
                .into());
            }
            // Later option lines are ignored, as in the v1 format.
            if options.is_none() {
                options = Some(
                    parse_option_line(rest).map_err(|(kind, offset)| err(line_no, Some(indent + 2 + offset), kind))?,
                );
            }
            continue;
        }
        seen_data = true;

        let fields: Vec<Token> = split_tokens(content, line_no);
        if n_ports == 2 && tokens.is_empty() && fields.len() == 5 {
            if let (Some(&prev), Ok(f)) = (freqs.last(), fields[0].text.parse::<f64>()) {
                if f * options.unwrap_or_default().freq_scale <= prev {
                    break;
                }
            }
        }
        for tok in fields {
            tokens.push(tok);
            if tokens.len() == per_record {
                let opt = options.unwrap_or_default();
                let mut values = Vec::with_capacity(per_record);
                for t in &tokens {
                    let v: f64 = t.text.parse().map_err(|_| {
                        err(
                            t.line,
                            Some(t.column),
                            ParseErrorKind::MalformedRow(format!("not a number: `{}`", t.text)),
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(err(
                            t.line,
                            Some(t.column),
                            ParseErrorKind::InvalidValue(format!("non-finite value `{}`", t.text)),
                        )
                        .into());
                    }
                    values.push(v);
                }
                let f = values[0] * opt.freq_scale;
                if let Some(&prev) = freqs.last() {
                    if f <= prev {
                        return Err(err(
                            tokens[0].line,
                            Some(tokens[0].column),
                            ParseErrorKind::NonMonotoneFrequency,
                        )
                        .into());
                    }
                }
                freqs.push(f);
                s21.push(opt.format.to_complex(values[1 + 2 * index], values[2 + 2 * index]));
                tokens.clear();
            }
        }
    }

    if let Some(first) = tokens.first() {
        return Err(err(
            first.line,
            Some(first.column),
            ParseErrorKind::MalformedRow(format!(
                "incomplete record: {} of {per_record} values for a {n_ports}-port network",
                tokens.len()
            )),
        )
        .into());
    }
    if freqs.is_empty() {
        return Err(err(last_line, None, ParseErrorKind::Empty).into());
    }
    FrequencyTrace::new(freqs, s21, meta)
}

fn split_tokens(content: &str, line: usize) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in content.char_indices().chain(std::iter::once((content.len(), ' '))) {
        let sep = c.is_whitespace() || c == ',';
        match (start, sep) {
            (None, false) => start = Some(i),
            (Some(s), true) => {
                out.push(Token {
                    text: &content[s..i],
                    line,
                    column: content[..s].chars().count() + 1,
                });
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Parses the text after `#`. Errors carry the byte offset of the bad token.
fn parse_option_line(rest: &str) -> std::result::Result<OptionLine, (ParseErrorKind, usize)> {
    let mut opt = OptionLine::default();
    let mut words = split_tokens(rest, 0).into_iter();
    while let Some(word) = words.next() {
        let offset = word.column - 1;
        let upper = word.text.to_ascii_uppercase();
        match upper.as_str() {
            "HZ" => opt.freq_scale = 1.0,
            "KHZ" => opt.freq_scale = 1e3,
            "MHZ" => opt.freq_scale = 1e6,
            "GHZ" => opt.freq_scale = 1e9,
            "S" => {}
            "Y" | "Z" | "H" | "G" => {
                return Err((
                    ParseErrorKind::UnsupportedFormat(format!("{upper}-parameters (only S-parameters are read)")),
                    offset,
                ))
            }
            "RI" => opt.format = DataFormat::RealImag,
            "MA" => opt.format = DataFormat::MagAngle,
            "DB" => opt.format = DataFormat::DbAngle,
            "R" => {
                let Some(z) = words.next() else {
                    return Err((
                        ParseErrorKind::MalformedOptionLine("`R` without an impedance".into()),
                        offset,
                    ));
                };
                match z.text.parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => opt.reference_impedance = v,
                    _ => {
                        return Err((
                            ParseErrorKind::MalformedOptionLine(format!("bad reference impedance `{}`", z.text)),
                            z.column - 1,
                        ))
                    }
                }
            }
            _ => {
                return Err((
                    ParseErrorKind::MalformedOptionLine(format!("unknown token `{}`", word.text)),
                    offset,
                ))
            }
        }
    }
    Ok(opt)
}
