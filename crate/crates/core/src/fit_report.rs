use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{LinearParams, NonlinearParams};

/// Quality flags attached to a fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Residuals well above the noise floor: the linear model misses structure.
    pub nonlinear_suspected: bool,
    /// At least one frequency point had three photon-number solutions.
    pub bifurcated: bool,
    /// Dip depth is small compared to the off-resonant noise.
    pub low_snr: bool,
    /// Nonlinear parameters are not resolved (errors exceed values).
    pub low_sensitivity: bool,
}

/// A parameter set with stable names, used to label values and errors.
pub trait ParamSet {
    fn names() -> &'static [&'static str];
    fn values(&self) -> Vec<f64>;
}

impl ParamSet for LinearParams {
    fn names() -> &'static [&'static str] {
        &[
            "amplitude",
            "electric_delay",
            "phase_offset",
            "fano_asymmetry",
            "resonant_freq",
            "internal_loss",
            "coupling_loss",
        ]
    }

    fn values(&self) -> Vec<f64> {
        vec![
            self.amplitude,
            self.electric_delay,
            self.phase_offset,
            self.fano_asymmetry,
            self.resonant_freq,
            self.internal_loss,
            self.coupling_loss,
        ]
    }
}

impl ParamSet for NonlinearParams {
    fn names() -> &'static [&'static str] {
        &[
            "amplitude",
            "electric_delay",
            "phase_offset",
            "fano_asymmetry",
            "resonant_freq",
            "internal_loss",
            "coupling_loss",
            "kerr",
            "two_photon",
            "drive_flux",
        ]
    }

    fn values(&self) -> Vec<f64> {
        let mut v = self.linear.values();
        v.extend([self.kerr, self.two_photon, self.drive_flux]);
        v
    }
}

/// Result of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<P> {
    pub params: P,
    /// One-sigma errors aligned with `P::names()`; NaN where a parameter is
    /// not identifiable or was held fixed.
    pub std_errors: Vec<f64>,
    pub residual_rms: f64,
    pub n_points: usize,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Diagnostics,
    /// Derived quantities (quality factors, normalized drive, ...).
    pub extras: BTreeMap<String, f64>,
}

impl<P: ParamSet> FitReport<P> {
    pub fn std_error(&self, name: &str) -> Option<f64> {
        P::names().iter().position(|n| *n == name).map(|i| self.std_errors[i])
    }

    pub fn named_values(&self) -> Vec<(&'static str, f64)> {
        P::names().iter().copied().zip(self.params.values()).collect()
    }
}
