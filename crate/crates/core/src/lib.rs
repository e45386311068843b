//! Loss characterization of superconducting coplanar-waveguide resonators
//! from complex S21 traces.
//!
//! The crate covers the linear asymmetric line-shape fit, the photon-number
//! calibration, the power-dependent TLS loss fit, and the Kerr / two-photon
//! nonlinear model with its slope extraction. Batch work runs on rayon with
//! the default `parallel` feature and sequentially without it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod circle;
pub mod constants;
pub mod duffing;
pub mod error;
pub mod exec;
pub mod fit_report;
pub mod io;
pub mod linear_fit;
pub mod lm;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tls;

pub use duffing::BranchPolicy;
pub use error::{Error, ParseError, ParseErrorKind, Result};
pub use exec::Execution;
pub use fit_report::{Diagnostics, FitReport, ParamSet};
pub use model::{FrequencyTrace, LinearParams, NonlinearParams, TlsParams, TraceMeta};
