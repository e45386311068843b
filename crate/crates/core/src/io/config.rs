//! Simulation configs (TOML) for synthetic power sweeps.
//!
//! ```toml
//! seed = 7                        # RNG seed; trace k uses stream k
//! label = "res1"
//! policy = "sweep-up"             # branch in the bistable region: low, high, sweep-up, sweep-down
//!
//! [resonator]
//! resonant_freq_hz = 5.0e9
//! q_coupling = 2.0e5              # Q_c = 1 / delta_c
//! amplitude = 0.5                 # off-resonant |S21|
//! electric_delay_s = 40e-9
//! phase_offset_rad = 0.8
//! fano_asymmetry_rad = 0.15
//!
//! [tls]
//! q_tls = 4.0e6
//! n_c = 10.0
//! alpha_tls = 0.5
//! delta_0 = 2.5e-7                # power-independent loss
//! temperature_k = 0.01
//!
//! [nonlinear]                     # optional, defaults to a linear resonator
//! kerr_hz = -1500.0
//! two_photon_hz = 1000.0          # must be >= 0
//!
//! [drive]
//! attenuation_db = 74.0
//! powers_dbm = [-140.0, -130.0]   # or start_dbm / stop_dbm / count
//! noise_sigma = 0.02              # per quadrature, relative to amplitude
//!
//! [grid]
//! points = 2001
//! span_linewidths = 10.0          # or span_hz; centered on center_hz (default f_r)
//! ```
//!
//! The linewidth unit is the low-power loaded linewidth
//! `f_r (delta_c + delta_TLS(0) + delta_0)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, toml_parse_error};
use crate::duffing::BranchPolicy;
use crate::error::{Error, Result};
use crate::model::{LinearParams, TlsParams};
use crate::synth::PowerSweepSpec;
use crate::tls::eval_tls_loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub policy: BranchPolicy,
    pub resonator: ResonatorSection,
    pub tls: TlsSection,
    #[serde(default)]
    pub nonlinear: NonlinearSection,
    pub drive: DriveSection,
    pub grid: GridSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorSection {
    pub resonant_freq_hz: f64,
    pub q_coupling: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub electric_delay_s: f64,
    #[serde(default)]
    pub phase_offset_rad: f64,
    #[serde(default)]
    pub fano_asymmetry_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsSection {
    pub q_tls: f64,
    pub n_c: f64,
    pub alpha_tls: f64,
    pub delta_0: f64,
    pub temperature_k: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearSection {
    #[serde(default)]
    pub kerr_hz: f64,
    #[serde(default)]
    pub two_photon_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default = "default_attenuation")]
    pub attenuation_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers_dbm: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default)]
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_linewidths: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_hz: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_attenuation() -> f64 {
    74.0
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(key, format!("must be finite and > 0, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be finite, got {v}")))
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.resonator;
        positive("resonator.resonant_freq_hz", r.resonant_freq_hz)?;
        positive("resonator.q_coupling", r.q_coupling)?;
        positive("resonator.amplitude", r.amplitude)?;
        finite("resonator.electric_delay_s", r.electric_delay_s)?;
        finite("resonator.phase_offset_rad", r.phase_offset_rad)?;
        if !(r.fano_asymmetry_rad.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(bad("resonator.fano_asymmetry_rad", "must lie in (-pi/2, pi/2)"));
        }

        let t = &self.tls;
        positive("tls.q_tls", t.q_tls)?;
        positive("tls.n_c", t.n_c)?;
        if !(t.alpha_tls > 0.0 && t.alpha_tls <= 2.0) {
            return Err(bad("tls.alpha_tls", format!("must lie in (0, 2], got {}", t.alpha_tls)));
        }
        if !(t.delta_0.is_finite() && t.delta_0 >= 0.0) {
            return Err(bad(
                "tls.delta_0",
                format!("must be finite and >= 0, got {}", t.delta_0),
            ));
        }
        positive("tls.temperature_k", t.temperature_k)?;

        finite("nonlinear.kerr_hz", self.nonlinear.kerr_hz)?;
        if !(self.nonlinear.two_photon_hz.is_finite() && self.nonlinear.two_photon_hz >= 0.0) {
            return Err(bad(
                "nonlinear.two_photon_hz",
                format!("must be finite and >= 0, got {}", self.nonlinear.two_photon_hz),
            ));
        }

        let d = &self.drive;
        if !(d.attenuation_db.is_finite() && d.attenuation_db >= 0.0) {
            return Err(bad(
                "drive.attenuation_db",
                format!("must be finite and >= 0, got {}", d.attenuation_db),
            ));
        }
        if !(d.noise_sigma.is_finite() && d.noise_sigma >= 0.0) {
            return Err(bad(
                "drive.noise_sigma",
                format!("must be finite and >= 0, got {}", d.noise_sigma),
            ));
        }
        self.powers()?;

        let g = &self.grid;
        if g.points < 2 {
            return Err(bad("grid.points", format!("need at least 2, got {}", g.points)));
        }
        match (g.span_linewidths, g.span_hz) {
            (Some(s), None) => positive("grid.span_linewidths", s)?,
            (None, Some(s)) => positive("grid.span_hz", s)?,
            _ => return Err(bad("grid", "set exactly one of span_linewidths and span_hz")),
        }
        if let Some(c) = g.center_hz {
            positive("grid.center_hz", c)?;
        }
        Ok(())
    }

    /// Instrument powers in dBm, ascending.
    pub fn powers(&self) -> Result<Vec<f64>> {
        let d = &self.drive;
        let powers = match (&d.powers_dbm, d.start_dbm, d.stop_dbm, d.count) {
            (Some(list), None, None, None) => {
                if list.is_empty() {
                    return Err(bad("drive.powers_dbm", "must not be empty"));
                }
                list.clone()
            }
            (None, Some(a), Some(b), Some(n)) => {
                finite("drive.start_dbm", a)?;
                finite("drive.stop_dbm", b)?;
                if n == 0 {
                    return Err(bad("drive.count", "must be >= 1"));
                }
                if n == 1 {
                    vec![a]
                } else {
                    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
                }
            }
            _ => {
                return Err(bad(
                    "drive.powers_dbm",
                    "give either powers_dbm or all of start_dbm, stop_dbm and count",
                ))
            }
        };
        if let Some(p) = powers.iter().find(|p| !p.is_finite()) {
            return Err(bad("drive.powers_dbm", format!("must be finite, got {p}")));
        }
        if powers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("drive.powers_dbm", "must be strictly ascending"));
        }
        Ok(powers)
    }

    pub fn tls_params(&self) -> TlsParams {
        TlsParams {
            q_tls: self.tls.q_tls,
            n_c: self.tls.n_c,
            alpha_tls: self.tls.alpha_tls,
            delta_0: self.tls.delta_0,
            temperature: self.tls.temperature_k,
            f_r: self.resonator.resonant_freq_hz,
        }
    }

    /// Generator settings. `linear.internal_loss` holds the low-power loss.
    pub fn to_spec(&self) -> Result<PowerSweepSpec> {
        self.validate()?;
        let r = &self.resonator;
        let tls = self.tls_params();
        let linear = LinearParams {
            amplitude: r.amplitude,
            electric_delay: r.electric_delay_s,
            phase_offset: r.phase_offset_rad,
            fano_asymmetry: r.fano_asymmetry_rad,
            resonant_freq: r.resonant_freq_hz,
            internal_loss: eval_tls_loss(&tls, 0.0),
            coupling_loss: 1.0 / r.q_coupling,
        };
        let g = &self.grid;
        let span = match (g.span_hz, g.span_linewidths) {
            (Some(s), _) => s,
            (None, Some(n)) => n * r.resonant_freq_hz * linear.total_loss(),
            (None, None) => unreachable!("validated"),
        };
        let center = g.center_hz.unwrap_or(r.resonant_freq_hz);
        let freqs = (0..g.points)
            .map(|i| center + (i as f64 / (g.points - 1) as f64 - 0.5) * span)
            .collect();
        Ok(PowerSweepSpec {
            linear,
            tls,
            kerr: self.nonlinear.kerr_hz,
            two_photon: self.nonlinear.two_photon_hz,
            instrument_powers: self.powers()?,
            attenuation_db: self.drive.attenuation_db,
            freqs,
            noise_sigma: self.drive.noise_sigma,
            policy: self.policy,
            seed: self.seed,
            label: self.label.clone(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_config_str(text: &str, path: Option<&Path>) -> Result<SimulationConfig> {
    let c: SimulationConfig = toml::from_str(text).map_err(|e| toml_parse_error(text, path, &e))?;
    c.validate()?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    parse_config_str(&read_text(path)?, Some(path))
}
