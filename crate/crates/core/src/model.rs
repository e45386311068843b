//! Domain types and the linear hanger-resonator line shape.
//!
//! Conventions used throughout the crate:
//! - frequencies and rates are ordinary frequencies in Hz; angular
//!   frequency `2πf` is formed only where a formula mixes rates with a
//!   photon flux (see [`crate::duffing::normalized_drive_params`]);
//! - detuning is normalized by the full loaded linewidth,
//!   `Δ̃ = (f - f_r) / (f_r (δ_i + δ_c))`;
//! - `coupling_loss` holds the diameter-corrected `δ_c = 1/Q_c`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metadata attached to every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    /// Power at the instrument port, dBm.
    pub instrument_power_dbm: f64,
    /// Total attenuation between instrument and device, dB (positive = loss).
    pub attenuation_db: f64,
    pub temperature_k: f64,
    pub label: String,
}

impl Default for TraceMeta {
    fn default() -> Self {
        Self {
            instrument_power_dbm: 0.0,
            attenuation_db: 0.0,
            temperature_k: 0.01,
            label: String::new(),
        }
    }
}

/// One complex S21 sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrace {
    freqs: Vec<f64>,
    s21: Vec<Complex64>,
    pub meta: TraceMeta,
}

impl FrequencyTrace {
    /// Builds a trace, checking ordering, finiteness and metadata ranges.
    ///
    /// The minimum length needed by the fitting routines is enforced by those
    /// routines, not here, so short files can still be loaded and inspected.
    pub fn new(freqs: Vec<f64>, s21: Vec<Complex64>, meta: TraceMeta) -> Result<Self> {
        if freqs.len() != s21.len() {
            return Err(Error::InvalidTrace(format!(
                "{} frequencies but {} S21 values",
                freqs.len(),
                s21.len()
            )));
        }
        if freqs.is_empty() {
            return Err(Error::InvalidTrace("empty trace".into()));
        }
        if let Some(i) = freqs.iter().position(|f| !f.is_finite()) {
            return Err(Error::InvalidTrace(format!("non-finite frequency at index {i}")));
        }
        if let Some(i) = freqs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrace(format!(
                "frequencies not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = s21.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidTrace(format!("non-finite S21 at index {i}")));
        }
        if !(meta.attenuation_db >= 0.0 && meta.attenuation_db.is_finite()) {
            return Err(Error::InvalidTrace(format!(
                "attenuation must be finite and >= 0, got {}",
                meta.attenuation_db
            )));
        }
        if !(meta.temperature_k > 0.0 && meta.temperature_k.is_finite()) {
            return Err(Error::InvalidTrace(format!(
                "temperature must be > 0, got {}",
                meta.temperature_k
            )));
        }
        if !meta.instrument_power_dbm.is_finite() {
            return Err(Error::InvalidTrace("instrument power must be finite".into()));
        }
        Ok(Self { freqs, s21, meta })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn s21(&self) -> &[Complex64] {
        &self.s21
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Contiguous sub-trace `[start, end)` sharing this trace's metadata.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        Self::new(
            self.freqs[start..end].to_vec(),
            self.s21[start..end].to_vec(),
            self.meta.clone(),
        )
    }

    /// Same frequencies and metadata with every S21 value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.freqs.clone(),
            self.s21.iter().map(|z| z * c).collect(),
            self.meta.clone(),
        )
    }
}

/// Parameters of the linear asymmetric hanger line shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub amplitude: f64,
    /// Electric delay, s.
    pub electric_delay: f64,
    /// Phase offset, rad.
    pub phase_offset: f64,
    /// Line-shape asymmetry angle, rad.
    pub fano_asymmetry: f64,
    /// Resonant frequency, Hz.
    pub resonant_freq: f64,
    /// `δ_i = 1/Q_i`.
    pub internal_loss: f64,
    /// Diameter-corrected `δ_c = 1/Q_c`.
    pub coupling_loss: f64,
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param(
                "amplitude",
                format!("must be > 0, got {}", self.amplitude),
            ));
        }
        if !self.electric_delay.is_finite() {
            return Err(Error::param("electric_delay", "must be finite"));
        }
        if !self.phase_offset.is_finite() {
            return Err(Error::param("phase_offset", "must be finite"));
        }
        if !(self.fano_asymmetry.abs() < FRAC_PI_2) {
            return Err(Error::param(
                "fano_asymmetry",
                format!("must lie in (-pi/2, pi/2), got {}", self.fano_asymmetry),
            ));
        }
        if !(self.resonant_freq > 0.0 && self.resonant_freq.is_finite()) {
            return Err(Error::param(
                "resonant_freq",
                format!("must be > 0, got {}", self.resonant_freq),
            ));
        }
        if !(self.internal_loss > 0.0 && self.internal_loss < 1.0) {
            return Err(Error::param(
                "internal_loss",
                format!("must lie in (0, 1), got {}", self.internal_loss),
            ));
        }
        if !(self.coupling_loss > 0.0 && self.coupling_loss < 1.0) {
            return Err(Error::param(
                "coupling_loss",
                format!("must lie in (0, 1), got {}", self.coupling_loss),
            ));
        }
        Ok(())
    }

    pub fn q_internal(&self) -> f64 {
        1.0 / self.internal_loss
    }

    pub fn q_coupling(&self) -> f64 {
        1.0 / self.coupling_loss
    }

    pub fn total_loss(&self) -> f64 {
        self.internal_loss + self.coupling_loss
    }

    /// Circle diameter `δ_c / (δ_c + δ_i)` in units of the amplitude.
    pub fn diameter(&self) -> f64 {
        self.coupling_loss / self.total_loss()
    }

    /// `Δ̃` at frequency `f`.
    pub fn normalized_detuning(&self, f: f64) -> f64 {
        (f - self.resonant_freq) / loaded_linewidth(self)
    }

    /// Measurement environment `A·exp(i(2πf·t_d + φ))`.
    pub fn environment(&self, f: f64) -> Complex64 {
        Complex64::from_polar(self.amplitude, 2.0 * PI * f * self.electric_delay + self.phase_offset)
    }
}

/// Resonator factor `1 - d·e^{iα}/(re + 2i·im)` shared by the linear and
/// nonlinear line shapes.
#[inline]
pub(crate) fn resonator_factor(diameter: f64, asymmetry: f64, re: f64, im: f64) -> Complex64 {
    let num = Complex64::from_polar(diameter, asymmetry);
    Complex64::new(1.0, 0.0) - num / Complex64::new(re, 2.0 * im)
}

/// Evaluates the linear line shape at each frequency.
pub fn eval_linear_s21(p: &LinearParams, freqs: &[f64]) -> Result<Vec<Complex64>> {
    p.validate()?;
    if freqs.iter().any(|f| !f.is_finite()) {
        return Err(Error::InvalidTrace("non-finite frequency".into()));
    }
    Ok(freqs.iter().map(|&f| eval_linear_point(p, f)).collect())
}

#[inline]
pub(crate) fn eval_linear_point(p: &LinearParams, f: f64) -> Complex64 {
    let detuning = p.normalized_detuning(f);
    p.environment(f) * resonator_factor(p.diameter(), p.fano_asymmetry, 1.0, detuning)
}

/// Loaded linewidth `f_r (δ_i + δ_c)` in Hz.
pub fn loaded_linewidth(p: &LinearParams) -> f64 {
    p.resonant_freq * p.total_loss()
}

/// Diameter-corrected coupling quality factor `1/δ_c`.
pub fn diameter_corrected_qc(p: &LinearParams) -> Result<f64> {
    if !(p.fano_asymmetry.abs() < FRAC_PI_2) {
        return Err(Error::DegenerateAsymmetry);
    }
    Ok(1.0 / p.coupling_loss)
}

/// Raw (uncorrected) coupling quality factor, `Q_c,raw = Q_c / cos α_f`.
pub fn raw_qc(p: &LinearParams) -> Result<f64> {
    let qc = diameter_corrected_qc(p)?;
    Ok(qc / p.fano_asymmetry.cos())
}

/// Applies the diameter correction `Q_c = Q_c,raw · cos α_f`.
pub fn correct_qc(q_c_raw: f64, fano_asymmetry: f64) -> Result<f64> {
    if !(fano_asymmetry.abs() < FRAC_PI_2) {
        return Err(Error::DegenerateAsymmetry);
    }
    Ok(q_c_raw * fano_asymmetry.cos())
}

/// Power-dependent two-level-system loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsParams {
    /// `Q_TLS`; `+inf` means no TLS contribution.
    pub q_tls: f64,
    /// Critical photon number.
    pub n_c: f64,
    /// Saturation exponent.
    pub alpha_tls: f64,
    /// Power-independent loss.
    pub delta_0: f64,
    pub temperature: f64,
    /// Resonant frequency, Hz.
    pub f_r: f64,
}

impl TlsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_tls > 0.0) {
            return Err(Error::param("q_tls", format!("must be > 0, got {}", self.q_tls)));
        }
        if !(self.n_c > 0.0 && self.n_c.is_finite()) {
            return Err(Error::param("n_c", format!("must be > 0, got {}", self.n_c)));
        }
        if !(self.alpha_tls > 0.0 && self.alpha_tls <= 2.0) {
            return Err(Error::param(
                "alpha_tls",
                format!("must lie in (0, 2], got {}", self.alpha_tls),
            ));
        }
        if !(self.delta_0 >= 0.0 && self.delta_0.is_finite()) {
            return Err(Error::param("delta_0", format!("must be >= 0, got {}", self.delta_0)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::param(
                "temperature",
                format!("must be > 0, got {}", self.temperature),
            ));
        }
        if !(self.f_r > 0.0 && self.f_r.is_finite()) {
            return Err(Error::param("f_r", format!("must be > 0, got {}", self.f_r)));
        }
        Ok(())
    }

    pub fn inverse_q_tls(&self) -> f64 {
        1.0 / self.q_tls
    }
}

/// Linear parameters plus Kerr and two-photon nonlinearity at a fixed drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub linear: LinearParams,
    /// Kerr coefficient `K_nl`, Hz per photon (signed).
    pub kerr: f64,
    /// Two-photon loss rate `γ_nl`, Hz per photon (>= 0).
    pub two_photon: f64,
    /// Incoming photon flux `|a_in|²`, photons/s.
    pub drive_flux: f64,
}

impl NonlinearParams {
    pub fn from_linear(linear: LinearParams) -> Self {
        Self {
            linear,
            kerr: 0.0,
            two_photon: 0.0,
            drive_flux: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.linear.validate()?;
        if !self.kerr.is_finite() {
            return Err(Error::param("kerr", "must be finite"));
        }
        if !(self.two_photon >= 0.0 && self.two_photon.is_finite()) {
            return Err(Error::param(
                "two_photon",
                format!("must be >= 0, got {}", self.two_photon),
            ));
        }
        if !(self.drive_flux >= 0.0 && self.drive_flux.is_finite()) {
            return Err(Error::param(
                "drive_flux",
                format!("must be >= 0, got {}", self.drive_flux),
            ));
        }
        Ok(())
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}
