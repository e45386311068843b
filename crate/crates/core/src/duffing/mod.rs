//! Kerr and two-photon-loss nonlinear response.
//!
//! Per frequency point the normalized photon-number cubic is solved for `ñ`,
//! which then enters the expanded line shape
//! `S21 = env · (1 − d e^{iα} / (1 + ηñ + 2i(Δ̃ − ξñ)))`.
//! Kerr and two-photon rates are ordinary frequencies (Hz per photon), so
//! `ξ = |ã_in|² K_nl / κ` and `η = |ã_in|² γ_nl / κ` with `κ = f_r (δ_i + δ_c)`.
//! The scaled drive `|ã_in|² = κ_c |a_in|² / κ²` divides a photon flux by a
//! rate and is therefore formed with angular rates `2π f_r δ`.

mod cubic;
mod extract;
mod fit;
mod geometry;

pub use cubic::{
    critical_kerr_scan, relative_cubic_residual, root_count, solve_photon_number, BranchPolicy, PhotonSolution,
};
pub use extract::{extract_kerr_two_photon, KerrExtraction, KerrSlopePoint, MIN_POWERS};
pub use fit::{fit_nonlinear, fit_nonlinear_with, NonlinearFitOptions};
pub use geometry::{ellipticity_metric, remove_environment};

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{resonator_factor, NonlinearParams};

/// Normalized drive quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedDrive {
    pub xi: f64,
    pub eta: f64,
    /// `|ã_in|²`: photon number per unit `ñ`.
    pub scaled_drive: f64,
}

pub fn normalized_drive_params(p: &NonlinearParams) -> Result<NormalizedDrive> {
    let lin = &p.linear;
    let total = lin.total_loss();
    let kappa_hz = lin.resonant_freq * total;
    if !(kappa_hz > 0.0) {
        return Err(Error::DegenerateLinewidth);
    }
    Ok(normalized_drive_raw(
        lin.resonant_freq,
        lin.internal_loss,
        lin.coupling_loss,
        p.kerr,
        p.two_photon,
        p.drive_flux,
    ))
}

#[inline]
pub(crate) fn normalized_drive_raw(
    f_r: f64,
    internal_loss: f64,
    coupling_loss: f64,
    kerr: f64,
    two_photon: f64,
    drive_flux: f64,
) -> NormalizedDrive {
    let total = internal_loss + coupling_loss;
    let kappa_hz = f_r * total;
    let scaled_drive = coupling_loss * drive_flux / (2.0 * PI * f_r * total * total);
    NormalizedDrive {
        xi: scaled_drive * kerr / kappa_hz,
        eta: scaled_drive * two_photon / kappa_hz,
        scaled_drive,
    }
}

/// Selected `ñ` at every frequency point, plus the number of positive
/// roots found there.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonProfile {
    pub n_tilde: Vec<f64>,
    pub root_counts: Vec<u8>,
    pub drive: NormalizedDrive,
}

impl PhotonProfile {
    pub fn bifurcated(&self) -> bool {
        self.root_counts.iter().any(|&c| c > 1)
    }

    /// Intra-resonator photon numbers `n = ñ |ã_in|²`.
    pub fn photon_numbers(&self) -> Vec<f64> {
        self.n_tilde.iter().map(|n| n * self.drive.scaled_drive).collect()
    }

    pub fn max_photon_number(&self) -> f64 {
        self.n_tilde.iter().cloned().fold(0.0, f64::max) * self.drive.scaled_drive
    }
}

/// Direction of a monotone grid: `Some(true)` increasing, `Some(false)`
/// decreasing, `None` otherwise.
fn grid_direction(freqs: &[f64]) -> Option<bool> {
    if freqs.windows(2).all(|w| w[1] > w[0]) {
        Some(true)
    } else if freqs.windows(2).all(|w| w[1] < w[0]) {
        Some(false)
    } else {
        None
    }
}

/// Solves the cubic along a grid of normalized detunings.
pub(crate) fn solve_profile(
    xi: f64,
    eta: f64,
    detunings: &[f64],
    freqs: &[f64],
    policy: BranchPolicy,
    exec: Execution,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let n = detunings.len();
    if policy.is_sweep() {
        let increasing = grid_direction(freqs).ok_or(Error::NonMonotoneGrid)?;
        let forward = increasing == (policy == BranchPolicy::SweepUp);
        let mut n_tilde = vec![0.0; n];
        let mut counts = vec![0u8; n];
        let mut prev = None;
        for k in 0..n {
            let i = if forward { k } else { n - 1 - k };
            let s = solve_photon_number(xi, eta, detunings[i], policy, prev)?;
            prev = Some(s.selected);
            n_tilde[i] = s.selected;
            counts[i] = s.roots.len() as u8;
        }
        Ok((n_tilde, counts))
    } else {
        let solved: Result<Vec<(f64, u8)>> = exec
            .for_len(n, 2048)
            .map(detunings, |&d| {
                solve_photon_number(xi, eta, d, policy, None).map(|s| (s.selected, s.roots.len() as u8))
            })
            .into_iter()
            .collect();
        Ok(solved?.into_iter().unzip())
    }
}

/// Evaluates the nonlinear line shape and the photon-number profile.
pub fn eval_nonlinear_detailed(
    p: &NonlinearParams,
    freqs: &[f64],
    policy: BranchPolicy,
    exec: Execution,
) -> Result<(Vec<Complex64>, PhotonProfile)> {
    p.validate()?;
    if freqs.iter().any(|f| !f.is_finite()) {
        return Err(Error::InvalidTrace("non-finite frequency".into()));
    }
    let drive = normalized_drive_params(p)?;
    let lin = &p.linear;
    let detunings: Vec<f64> = freqs.iter().map(|&f| lin.normalized_detuning(f)).collect();
    let (n_tilde, root_counts) = solve_profile(drive.xi, drive.eta, &detunings, freqs, policy, exec)?;
    let d = lin.diameter();
    let s21 = freqs
        .iter()
        .zip(&detunings)
        .zip(&n_tilde)
        .map(|((&f, &det), &nt)| {
            lin.environment(f) * resonator_factor(d, lin.fano_asymmetry, 1.0 + drive.eta * nt, det - drive.xi * nt)
        })
        .collect();
    Ok((
        s21,
        PhotonProfile {
            n_tilde,
            root_counts,
            drive,
        },
    ))
}

/// Nonlinear S21 at each frequency under the given branch policy.
pub fn eval_nonlinear_s21(p: &NonlinearParams, freqs: &[f64], policy: BranchPolicy) -> Result<Vec<Complex64>> {
    eval_nonlinear_detailed(p, freqs, policy, Execution::default()).map(|(s, _)| s)
}

/// Photon-number profile only.
pub fn photon_profile(p: &NonlinearParams, freqs: &[f64], policy: BranchPolicy) -> Result<PhotonProfile> {
    eval_nonlinear_detailed(p, freqs, policy, Execution::default()).map(|(_, prof)| prof)
}
