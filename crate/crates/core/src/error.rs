use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` out of domain: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate asymmetry: |alpha_f| must be below pi/2")]
    DegenerateAsymmetry,

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("no resonance dip found (depth {depth:.3e} below threshold {threshold:.3e})")]
    NoResonance { depth: f64, threshold: f64 },

    #[error("singular jacobian: the trace does not constrain all parameters")]
    SingularJacobian,

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("expected {expected} resonances, found {} at {found:?} Hz", found.len())]
    SegmentationMismatch { expected: usize, found: Vec<f64> },

    #[error(
        "photon-number span too small: {points} points over {decades:.2} decades (need >= 6 points over >= 3 decades)"
    )]
    InsufficientSpan { points: usize, decades: f64 },

    #[error("need at least {needed} powers for slope extraction, got {got}")]
    InsufficientPowers { needed: usize, got: usize },

    #[error("zero total linewidth")]
    DegenerateLinewidth,

    #[error("internal consistency: cubic has no positive real root (xi={xi}, eta={eta}, detuning={detuning})")]
    NoPositiveRoot { xi: f64, eta: f64, detuning: f64 },

    #[error("evaluation grid must be monotone for sweep policies")]
    NonMonotoneGrid,

    #[error("branch selection unstable near bifurcation: {points} points hopped branches between iterations")]
    BifurcationUnstable { points: usize },

    #[error("circle radius {radius:.3e} below noise floor {floor:.3e}")]
    LowSignal { radius: f64, floor: f64 },

    #[error("nonlinear parameters unresolved at {dropped} powers, {remaining} usable (need >= 4)")]
    LowSensitivity { dropped: usize, remaining: usize },

    #[error("at {power_dbm} dBm ({}): {source}", path.as_deref().map(|p| p.display().to_string()).unwrap_or_else(|| "in memory".into()))]
    AtPower {
        power_dbm: f64,
        path: Option<PathBuf>,
        source: Box<Error>,
    },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("config: key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from unreadable or invalid input (files,
    /// configs) rather than from the analysis itself.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parse(_) | Error::Config { .. } | Error::Io { .. } | Error::InvalidTrace(_) => true,
            Error::AtPower { source, .. } => source.is_input_error(),
            _ => false,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// A parser failure with its location in the input.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub path: Option<PathBuf>,
    /// 1-based line number.
    pub line: usize,
    /// 1-based column of the offending field, when known.
    pub column: Option<usize>,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    MalformedRow(String),
    NonMonotoneFrequency,
    MissingMetadata(&'static str),
    MalformedMetadata(String),
    MissingHeader,
    Empty,
    MalformedOptionLine(String),
    UnsupportedFormat(String),
    InvalidValue(String),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.path {
            write!(f, "{}:", p.display())?;
        }
        write!(f, "{}", self.line)?;
        if let Some(c) = self.column {
            write!(f, ":{c}")?;
        }
        write!(f, ": ")?;
        match &self.kind {
            ParseErrorKind::MalformedRow(m) => write!(f, "malformed row: {m}"),
            ParseErrorKind::NonMonotoneFrequency => {
                write!(f, "frequency not strictly increasing")
            }
            ParseErrorKind::MissingMetadata(k) => write!(f, "missing metadata key `{k}`"),
            ParseErrorKind::MalformedMetadata(m) => write!(f, "malformed metadata: {m}"),
            ParseErrorKind::MissingHeader => write!(f, "missing column header"),
            ParseErrorKind::Empty => write!(f, "no data rows"),
            ParseErrorKind::MalformedOptionLine(m) => write!(f, "malformed option line: {m}"),
            ParseErrorKind::UnsupportedFormat(m) => write!(f, "unsupported format: {m}"),
            ParseErrorKind::InvalidValue(m) => write!(f, "invalid value: {m}"),
        }
    }
}
