//! CSV tables for external plotting.
//!
//! | kind         | columns |
//! |--------------|---------|
//! | `qi_vs_n`    | `instrument_power_dbm,photon_number,q_internal,q_internal_err,excluded` |
//! | `iq_trace`   | `freq_hz,re,im` |
//! | `kerr_slope` | `photon_number,kerr_shift_hz,kerr_shift_err_hz,two_photon_rate_hz,two_photon_rate_err_hz` |
//!
//! Values use 17 significant digits; missing values are `nan`.

use std::fmt::Write as _;
use std::path::Path;

use super::{fmt17, write_atomic};
use crate::duffing::KerrSlopePoint;
use crate::error::Result;
use crate::model::FrequencyTrace;
use crate::pipeline::SweepPower;

/// One row of the `qi_vs_n` table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QiPoint {
    pub instrument_power_dbm: f64,
    pub photon_number: f64,
    pub q_internal: f64,
    pub q_internal_err: f64,
    pub excluded: bool,
}

impl QiPoint {
    /// Row for a sweep power; NaN values where the linear fit failed.
    /// `σ_Qi = σ_δi / δ_i²`.
    pub fn from_sweep(p: &SweepPower) -> Self {
        let (q, err) = match &p.linear {
            Some(f) => {
                let d = f.params.internal_loss;
                let sd = f.std_error("internal_loss").unwrap_or(f64::NAN);
                (1.0 / d, sd / (d * d))
            }
            None => (f64::NAN, f64::NAN),
        };
        Self {
            instrument_power_dbm: p.instrument_power_dbm,
            photon_number: p.photon_number,
            q_internal: q,
            q_internal_err: err,
            excluded: p.excluded,
        }
    }
}

pub enum PlotTable<'a> {
    QiVsN(&'a [QiPoint]),
    IqTrace(&'a FrequencyTrace),
    KerrSlope(&'a [KerrSlopePoint]),
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        fmt17(x)
    }
}

impl PlotTable<'_> {
    pub fn kind(&self) -> &'static str {
        match self {
            PlotTable::QiVsN(_) => "qi_vs_n",
            PlotTable::IqTrace(_) => "iq_trace",
            PlotTable::KerrSlope(_) => "kerr_slope",
        }
    }

    pub fn header(&self) -> &'static str {
        match self {
            PlotTable::QiVsN(_) => "instrument_power_dbm,photon_number,q_internal,q_internal_err,excluded",
            PlotTable::IqTrace(_) => "freq_hz,re,im",
            PlotTable::KerrSlope(_) => {
                "photon_number,kerr_shift_hz,kerr_shift_err_hz,two_photon_rate_hz,two_photon_rate_err_hz"
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(self.header());
        out.push('\n');
        match self {
            PlotTable::QiVsN(rows) => {
                for r in *rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        num(r.instrument_power_dbm),
                        num(r.photon_number),
                        num(r.q_internal),
                        num(r.q_internal_err),
                        r.excluded
                    );
                }
            }
            PlotTable::IqTrace(t) => {
                for (f, z) in t.freqs().iter().zip(t.s21()) {
                    let _ = writeln!(out, "{},{},{}", num(*f), num(z.re), num(z.im));
                }
            }
            PlotTable::KerrSlope(rows) => {
                for r in *rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        num(r.photon_number),
                        num(r.kerr_shift),
                        num(r.kerr_shift_err),
                        num(r.two_photon_rate),
                        num(r.two_photon_rate_err)
                    );
                }
            }
        }
        out
    }
}

/// Writes a plot table atomically.
pub fn write_plot_table(table: &PlotTable<'_>, path: &Path) -> Result<()> {
    write_atomic(path, table.to_csv().as_bytes())
}
