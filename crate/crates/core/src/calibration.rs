//! Instrument power to on-chip power, photon flux and mean photon number.

use std::f64::consts::PI;

use crate::constants::{HBAR, PLANCK};
use crate::error::{Error, Result};
use crate::model::LinearParams;

/// Drive settings of one trace: instrument power and the (flat) attenuation
/// between instrument and device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveCalibration {
    pub attenuation_db: f64,
    pub instrument_power_dbm: f64,
}

impl DriveCalibration {
    pub fn new(attenuation_db: f64, instrument_power_dbm: f64) -> Result<Self> {
        if !(attenuation_db.is_finite() && attenuation_db >= 0.0) {
            return Err(Error::param(
                "attenuation_db",
                format!("must be finite and >= 0, got {attenuation_db}"),
            ));
        }
        if !instrument_power_dbm.is_finite() {
            return Err(Error::param("instrument_power_dbm", "must be finite"));
        }
        Ok(Self {
            attenuation_db,
            instrument_power_dbm,
        })
    }

    /// Power at the device input, W.
    pub fn on_chip_power(&self) -> f64 {
        dbm_to_watts(self.instrument_power_dbm - self.attenuation_db)
    }
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}

/// `P_in / (h f_r)`, photons per second.
pub fn input_photon_flux(p_in: f64, f_r: f64) -> f64 {
    p_in / (PLANCK * f_r)
}

/// Mean intra-resonator photon number on resonance,
/// `n̄ = 2 P_in / (ħ ω_r²) · δ_c / (δ_c + δ_i)²`.
pub fn mean_photon_number(p_in: f64, p: &LinearParams) -> f64 {
    let omega = 2.0 * PI * p.resonant_freq;
    let total = p.total_loss();
    2.0 * p_in / (HBAR * omega * omega) * p.coupling_loss / (total * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lin(delta_i: f64, delta_c: f64) -> LinearParams {
        LinearParams {
            amplitude: 1.0,
            electric_delay: 0.0,
            phase_offset: 0.0,
            fano_asymmetry: 0.0,
            resonant_freq: 5e9,
            internal_loss: delta_i,
            coupling_loss: delta_c,
        }
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(0.0), 1e-3, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(-30.0), 1e-6, max_relative = 1e-15);
        let cal = DriveCalibration::new(74.0, 0.0).unwrap();
        assert_relative_eq!(cal.on_chip_power(), 3.981e-11, max_relative = 1e-3);
        assert!(DriveCalibration::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn photon_flux() {
        assert_eq!(input_photon_flux(0.0, 5e9), 0.0);
        assert_relative_eq!(input_photon_flux(PLANCK * 5e9, 5e9), 1.0, max_relative = 1e-15);
        assert_relative_eq!(input_photon_flux(1e-15, 5e9), 3.018e8, max_relative = 1e-3);
    }

    #[test]
    fn photon_number_worked_value() {
        assert_eq!(mean_photon_number(0.0, &lin(1e-6, 1e-6)), 0.0);
        // 2P/(ħω²) = 1.9214e-2, δ factor = 2.5e5
        assert_relative_eq!(
            mean_photon_number(1e-15, &lin(1e-6, 1e-6)),
            4.804e3,
            max_relative = 1e-3
        );
    }

    #[test]
    fn photon_number_coupling_dependence() {
        let a = mean_photon_number(1e-15, &lin(1e-6, 1e-6));
        let b = mean_photon_number(1e-15, &lin(2e-6, 1e-6));
        // (δ_c/(3δ_c)²) / (δ_c/(2δ_c)²) = 4/9
        assert_relative_eq!(b / a, 4.0 / 9.0, max_relative = 1e-12);
        // maximum at critical coupling
        let at = |dc: f64| mean_photon_number(1e-15, &lin(1e-6, dc));
        assert!(at(0.5e-6) < at(1e-6));
        assert!(at(2e-6) < at(1e-6));
        // linear in power
        assert_relative_eq!(
            mean_photon_number(3e-15, &lin(1e-6, 1e-6)),
            3.0 * a,
            max_relative = 1e-14
        );
    }
}
