use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{normalized_drive_raw, solve_profile, BranchPolicy};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fit_report::{Diagnostics, FitReport};
use crate::linear_fit::{LinearFrame, MIN_FIT_POINTS};
use crate::lm::{self, Bounds, LmOptions};
use crate::model::{resonator_factor, FrequencyTrace, LinearParams, NonlinearParams};

/// A nonlinear parameter counts as resolved when it exceeds this many
/// standard errors.
pub const RESOLVED_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct NonlinearFitOptions {
    pub lm: LmOptions,
    /// Relative jump in the selected root between the last two iterates
    /// above which a point counts as having switched branch.
    pub continuity_threshold: f64,
    /// Number of branch-switching points tolerated before the fit is
    /// rejected as unstable.
    pub max_branch_switches: usize,
}

impl Default for NonlinearFitOptions {
    fn default() -> Self {
        Self {
            lm: LmOptions::default(),
            continuity_threshold: 0.1,
            max_branch_switches: 1,
        }
    }
}

/// Fits the nonlinear line shape with the drive flux held fixed.
///
/// Every residual evaluation re-solves the photon-number cubic at each
/// frequency point under `policy`. Free parameters are the seven linear ones
/// plus `K_nl` and `γ_nl >= 0`.
pub fn fit_nonlinear(
    trace: &FrequencyTrace,
    guess: &NonlinearParams,
    policy: BranchPolicy,
) -> Result<FitReport<NonlinearParams>> {
    fit_nonlinear_with(trace, guess, policy, &NonlinearFitOptions::default())
}

pub fn fit_nonlinear_with(
    trace: &FrequencyTrace,
    guess: &NonlinearParams,
    policy: BranchPolicy,
    opts: &NonlinearFitOptions,
) -> Result<FitReport<NonlinearParams>> {
    if trace.len() < MIN_FIT_POINTS + 2 {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS + 2,
            got: trace.len(),
        });
    }
    guess.validate()?;
    let problem = Problem::new(trace, guess, policy);
    let x0 = problem.to_internal(guess);
    let mut bounds = Bounds::unbounded(9);
    bounds.lower[8] = 0.0;
    let out = lm::minimize(|x| problem.residuals(x), &x0, Some(&bounds), &opts.lm)?;

    let (n_final, counts) = problem.profile(&out.x).ok_or(Error::NonConvergence {
        iterations: out.iterations,
    })?;
    if let Some((n_prev, _)) = problem.profile(&out.previous_x) {
        let switches = n_final
            .iter()
            .zip(&n_prev)
            .filter(|(a, b)| ((*a - *b) / b.max(f64::MIN_POSITIVE)).abs() > opts.continuity_threshold)
            .count();
        if switches > opts.max_branch_switches {
            return Err(Error::BifurcationUnstable { points: switches });
        }
    }

    let cov = out.covariance()?;
    let mut std_errors = lm::propagate_std_errors(&out.x, &cov, |x| problem.to_physical_offsets(x));
    std_errors.push(f64::NAN); // drive flux is fixed
    let params = problem.to_physical(&out.x);
    let drive = normalized_drive_raw(
        params.linear.resonant_freq,
        params.linear.internal_loss,
        params.linear.coupling_loss,
        params.kerr,
        params.two_photon,
        params.drive_flux,
    );
    let n_max = n_final.iter().cloned().fold(0.0, f64::max) * drive.scaled_drive;

    let kerr_err = std_errors[7];
    let tp_err = std_errors[8];
    let diagnostics = Diagnostics {
        bifurcated: counts.iter().any(|&c| c > 1),
        low_sensitivity: !(RESOLVED_SIGMAS * kerr_err < params.kerr.abs())
            && !(RESOLVED_SIGMAS * tp_err < params.two_photon),
        ..Diagnostics::default()
    };

    let mut extras = BTreeMap::new();
    extras.insert("xi".into(), drive.xi);
    extras.insert("eta".into(), drive.eta);
    extras.insert("scaled_drive".into(), drive.scaled_drive);
    extras.insert("n_max".into(), n_max);
    extras.insert("kerr_shift_hz".into(), params.kerr * n_max);
    extras.insert("two_photon_rate_hz".into(), params.two_photon * n_max);
    extras.insert("q_internal".into(), params.linear.q_internal());
    extras.insert("q_coupling".into(), params.linear.q_coupling());
    extras.insert(
        "q_internal_total".into(),
        1.0 / (params.linear.internal_loss + params.two_photon * n_max / params.linear.resonant_freq),
    );

    Ok(FitReport {
        converged: out.converged && params.validate().is_ok(),
        params,
        std_errors,
        residual_rms: (out.cost / trace.len() as f64).sqrt(),
        n_points: trace.len(),
        iterations: out.iterations,
        diagnostics,
        extras,
    })
}

/// Linear-fit coordinates extended by `[K_nl·s, γ_nl·s]` where
/// `s = |ã_in|²/κ` at the guess, so both extra coordinates start as the
/// guessed `ξ` and `η`.
struct Problem<'a> {
    frame: LinearFrame,
    kerr_scale: f64,
    drive_flux: f64,
    freqs: &'a [f64],
    data: &'a [Complex64],
    policy: BranchPolicy,
}

impl<'a> Problem<'a> {
    fn new(trace: &'a FrequencyTrace, guess: &NonlinearParams, policy: BranchPolicy) -> Self {
        let lin = &guess.linear;
        let d = normalized_drive_raw(
            lin.resonant_freq,
            lin.internal_loss,
            lin.coupling_loss,
            1.0,
            0.0,
            guess.drive_flux,
        );
        let kerr_scale = if d.xi > 0.0 {
            d.xi
        } else {
            1.0 / (lin.resonant_freq * lin.total_loss())
        };
        Self {
            frame: LinearFrame::new(trace, lin),
            kerr_scale,
            drive_flux: guess.drive_flux,
            freqs: trace.freqs(),
            data: trace.s21(),
            policy,
        }
    }

    fn to_internal(&self, p: &NonlinearParams) -> Vec<f64> {
        let mut x = self.frame.to_internal(&p.linear);
        x.push(p.kerr * self.kerr_scale);
        x.push(p.two_photon * self.kerr_scale);
        x
    }

    fn to_physical(&self, x: &[f64]) -> NonlinearParams {
        NonlinearParams {
            linear: self.frame.to_physical(&x[..7]),
            kerr: x[7] / self.kerr_scale,
            two_photon: x[8] / self.kerr_scale,
            drive_flux: self.drive_flux,
        }
    }

    fn to_physical_offsets(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.frame.to_physical_offsets(&x[..7]);
        v.push(x[7] / self.kerr_scale);
        v.push(x[8] / self.kerr_scale);
        v
    }

    fn linear_of(&self, x: &[f64]) -> LinearParams {
        self.frame.to_physical(&x[..7])
    }

    /// Selected `ñ` and root counts at internal point `x`.
    fn profile(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<u8>)> {
        if !LinearFrame::in_domain(&x[..7]) || !(x[8] >= 0.0) || !x[7].is_finite() {
            return None;
        }
        let lin = self.linear_of(x);
        let drive = normalized_drive_raw(
            lin.resonant_freq,
            lin.internal_loss,
            lin.coupling_loss,
            x[7] / self.kerr_scale,
            x[8] / self.kerr_scale,
            self.drive_flux,
        );
        let detunings: Vec<f64> = self.freqs.iter().map(|&f| self.frame.point(&x[..7], f).2).collect();
        solve_profile(
            drive.xi,
            drive.eta,
            &detunings,
            self.freqs,
            self.policy,
            Execution::Sequential,
        )
        .ok()
    }

    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (n_tilde, _) = self.profile(x)?;
        let lin = self.linear_of(x);
        let drive = normalized_drive_raw(
            lin.resonant_freq,
            lin.internal_loss,
            lin.coupling_loss,
            x[7] / self.kerr_scale,
            x[8] / self.kerr_scale,
            self.drive_flux,
        );
        let mut out = Vec::with_capacity(2 * self.freqs.len());
        for ((&f, z), &nt) in self.freqs.iter().zip(self.data).zip(&n_tilde) {
            let (env, d, det) = self.frame.point(&x[..7], f);
            let m = env * resonator_factor(d, x[3], 1.0 + drive.eta * nt, det - drive.xi * nt);
            out.push(m.re - z.re);
            out.push(m.im - z.im);
        }
        Some(out)
    }
}
