//! Multi-power analyses: TLS loss from a power sweep and Kerr / two-photon
//! rates from the nonlinear fits of a sweep.

use serde::{Deserialize, Serialize};

use crate::calibration::{input_photon_flux, mean_photon_number, DriveCalibration};
use crate::duffing::{ellipticity_metric, extract_kerr_two_photon, fit_nonlinear, BranchPolicy, KerrExtraction};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fit_report::FitReport;
use crate::linear_fit::fit_linear;
use crate::model::{FrequencyTrace, LinearParams, NonlinearParams};
use crate::tls::{fit_tls_with, LossPoint, TlsFit};

/// Loss model fitted to the `(n̄, δ_i)` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossModel {
    #[default]
    Tls,
    /// TLS plus a two-photon term `γ_nl n̄ / f_r`.
    TlsTwoPhoton,
}

/// Thresholds that mark a power as nonlinear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearThresholds {
    /// Ellipticity above this multiple of the lowest-power value.
    pub ellipticity_factor: f64,
    /// Fitted `|ξ|` above this value.
    pub max_xi: f64,
}

impl Default for NonlinearThresholds {
    fn default() -> Self {
        Self {
            ellipticity_factor: 10.0,
            max_xi: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub model: LossModel,
    pub exclude_nonlinear: bool,
    pub thresholds: NonlinearThresholds,
    pub policy: BranchPolicy,
    pub exec: Execution,
}

/// Per-power outcome of a sweep analysis.
#[derive(Debug, Clone)]
pub struct SweepPower {
    pub instrument_power_dbm: f64,
    /// On-chip power, W.
    pub input_power: f64,
    /// Calibrated mean photon number; NaN when the linear fit failed.
    pub photon_number: f64,
    pub linear: Option<FitReport<LinearParams>>,
    pub ellipticity: Option<f64>,
    /// `ξ` from a nonlinear fit, when the nonlinearity check ran.
    pub xi: Option<f64>,
    pub bifurcated: bool,
    pub nonlinear: bool,
    pub excluded: bool,
    /// Why the power was flagged or excluded.
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepAnalysis {
    pub powers: Vec<SweepPower>,
    pub ellipticity_baseline: Option<f64>,
    pub thresholds: NonlinearThresholds,
    pub model: LossModel,
    pub tls: FitReport<TlsFit>,
}

impl SweepAnalysis {
    /// The `(n̄, δ_i)` points that entered the loss fit.
    pub fn loss_points(&self) -> Vec<LossPoint> {
        used_points(&self.powers)
    }
}

fn used_points(powers: &[SweepPower]) -> Vec<LossPoint> {
    powers
        .iter()
        .filter(|p| !p.excluded)
        .filter_map(|p| {
            p.linear.as_ref().map(|l| LossPoint {
                photon_number: p.photon_number,
                internal_loss: l.params.internal_loss,
            })
        })
        .collect()
}

fn at_power(trace: &FrequencyTrace, e: Error) -> Error {
    Error::AtPower {
        power_dbm: trace.meta.instrument_power_dbm,
        path: None,
        source: Box::new(e),
    }
}

fn sorted_by_power(traces: &[FrequencyTrace]) -> Vec<&FrequencyTrace> {
    let mut sorted: Vec<&FrequencyTrace> = traces.iter().collect();
    sorted.sort_by(|a, b| a.meta.instrument_power_dbm.total_cmp(&b.meta.instrument_power_dbm));
    sorted
}

/// Linear fit, calibration and (optionally) the nonlinearity check of every
/// power, then the loss-model fit over the retained `(n̄, δ_i)` points.
///
/// Powers are processed in parallel. A power counts as nonlinear when its
/// ellipticity exceeds `ellipticity_factor` times that of the lowest power,
/// when a nonlinear fit gives `|ξ| > max_xi`, or when that fit bifurcates or
/// fails. Without `exclude_nonlinear` the check is skipped and any per-power
/// failure aborts the analysis.
pub fn analyze_sweep(traces: &[FrequencyTrace], opts: &SweepOptions) -> Result<SweepAnalysis> {
    let sorted = sorted_by_power(traces);
    let first = *sorted.first().ok_or(Error::InsufficientSpan {
        points: 0,
        decades: 0.0,
    })?;

    let linear: Vec<Result<FitReport<LinearParams>>> = opts.exec.map(&sorted, |t| fit_linear(t, None));
    let mut powers: Vec<SweepPower> = Vec::with_capacity(sorted.len());
    for (trace, fit) in sorted.iter().zip(linear) {
        let cal = DriveCalibration::new(trace.meta.attenuation_db, trace.meta.instrument_power_dbm)
            .map_err(|e| at_power(trace, e))?;
        let input_power = cal.on_chip_power();
        let mut power = SweepPower {
            instrument_power_dbm: trace.meta.instrument_power_dbm,
            input_power,
            photon_number: f64::NAN,
            linear: None,
            ellipticity: None,
            xi: None,
            bifurcated: false,
            nonlinear: false,
            excluded: false,
            note: None,
        };
        match fit {
            Ok(f) => {
                power.photon_number = mean_photon_number(input_power, &f.params);
                power.linear = Some(f);
            }
            Err(e) if opts.exclude_nonlinear => {
                power.nonlinear = true;
                power.excluded = true;
                power.note = Some(format!("linear fit failed: {e}"));
            }
            Err(e) => return Err(at_power(trace, e)),
        }
        powers.push(power);
    }

    let reference = powers
        .iter()
        .find_map(|p| p.linear.as_ref().map(|l| l.params))
        .ok_or_else(|| at_power(first, Error::NonConvergence { iterations: 0 }))?;

    let mut baseline = None;
    if opts.exclude_nonlinear {
        let ellipticities: Vec<Option<f64>> = opts.exec.map(&sorted, |t| ellipticity_metric(t, &reference).ok());
        baseline = ellipticities[0];
        let checks: Vec<Option<std::result::Result<(f64, bool), String>>> = opts.exec.map_range(sorted.len(), |k| {
            let lin = powers[k].linear.as_ref()?;
            let guess = NonlinearParams {
                drive_flux: input_photon_flux(powers[k].input_power, lin.params.resonant_freq),
                ..NonlinearParams::from_linear(lin.params)
            };
            Some(
                fit_nonlinear(sorted[k], &guess, opts.policy)
                    .map(|r| (r.extras["xi"], r.diagnostics.bifurcated))
                    .map_err(|e| e.to_string()),
            )
        });
        for ((power, ell), check) in powers.iter_mut().zip(ellipticities).zip(checks) {
            power.ellipticity = ell;
            let mut reasons = Vec::new();
            if let (Some(e), Some(b)) = (ell, baseline) {
                if e > opts.thresholds.ellipticity_factor * b {
                    reasons.push(format!(
                        "ellipticity {e:.3e} above {}x baseline",
                        opts.thresholds.ellipticity_factor
                    ));
                }
            }
            match check {
                Some(Ok((xi, bif))) => {
                    power.xi = Some(xi);
                    power.bifurcated = bif;
                    if xi.abs() > opts.thresholds.max_xi {
                        reasons.push(format!("|xi| = {:.3} above {}", xi.abs(), opts.thresholds.max_xi));
                    }
                    if bif {
                        reasons.push("bifurcated".into());
                    }
                }
                Some(Err(e)) => reasons.push(format!("nonlinear fit failed: {e}")),
                None => {}
            }
            if !reasons.is_empty() {
                power.nonlinear = true;
                power.excluded = true;
                let joined = reasons.join("; ");
                power.note = Some(match power.note.take() {
                    Some(n) => format!("{n}; {joined}"),
                    None => joined,
                });
            }
        }
    }

    let points = used_points(&powers);
    let f_r = reference.resonant_freq;
    let temperature = first.meta.temperature_k;
    let tls = fit_tls_with(
        &points,
        temperature,
        f_r,
        opts.model == LossModel::TlsTwoPhoton,
        opts.exec,
    )?;
    Ok(SweepAnalysis {
        powers,
        ellipticity_baseline: baseline,
        thresholds: opts.thresholds,
        model: opts.model,
        tls,
    })
}

#[derive(Debug, Clone, Default)]
pub struct KerrOptions {
    pub policy: BranchPolicy,
    pub exec: Execution,
}

/// Nonlinear fit of one power in a Kerr extraction.
#[derive(Debug, Clone)]
pub struct KerrPower {
    pub instrument_power_dbm: f64,
    pub input_power: f64,
    /// Per-trace maximum photon number of the selected branch.
    pub photon_number: f64,
    pub fit: FitReport<NonlinearParams>,
    /// False when the power was dropped for low sensitivity. Such a fit may
    /// also be unconverged, since the nonlinear parameters are unidentifiable.
    pub used: bool,
}

#[derive(Debug, Clone)]
pub struct KerrAnalysis {
    /// Linear fit of the lowest power, used to seed every nonlinear fit.
    pub seed: FitReport<LinearParams>,
    pub powers: Vec<KerrPower>,
    pub extraction: KerrExtraction,
}

/// Nonlinear fit of every power seeded by the lowest-power linear fit, then
/// the slope extraction over the powers whose nonlinear parameters are
/// resolved.
///
/// The drive flux of each fit is fixed from the trace metadata. Powers
/// flagged low-sensitivity are dropped, converged or not; if fewer than four remain the
/// analysis fails with [`Error::LowSensitivity`].
pub fn analyze_kerr(traces: &[FrequencyTrace], opts: &KerrOptions) -> Result<KerrAnalysis> {
    let sorted = sorted_by_power(traces);
    if sorted.len() < crate::duffing::MIN_POWERS {
        return Err(Error::InsufficientPowers {
            needed: crate::duffing::MIN_POWERS,
            got: sorted.len(),
        });
    }
    let seed = fit_linear(sorted[0], None).map_err(|e| at_power(sorted[0], e))?;
    let fits: Vec<Result<KerrPower>> = opts.exec.map(&sorted, |trace| {
        let cal = DriveCalibration::new(trace.meta.attenuation_db, trace.meta.instrument_power_dbm)
            .map_err(|e| at_power(trace, e))?;
        let input_power = cal.on_chip_power();
        let guess = NonlinearParams {
            drive_flux: input_photon_flux(input_power, seed.params.resonant_freq),
            ..NonlinearParams::from_linear(seed.params)
        };
        let fit = fit_nonlinear(trace, &guess, opts.policy).map_err(|e| at_power(trace, e))?;
        if !fit.converged && !fit.diagnostics.low_sensitivity {
            return Err(at_power(
                trace,
                Error::NonConvergence {
                    iterations: fit.iterations,
                },
            ));
        }
        Ok(KerrPower {
            instrument_power_dbm: trace.meta.instrument_power_dbm,
            input_power,
            photon_number: fit.extras["n_max"],
            used: !fit.diagnostics.low_sensitivity,
            fit,
        })
    });
    let powers: Vec<KerrPower> = fits.into_iter().collect::<Result<_>>()?;
    let used: Vec<&KerrPower> = powers.iter().filter(|p| p.used).collect();
    if used.len() < crate::duffing::MIN_POWERS {
        return Err(Error::LowSensitivity {
            dropped: powers.len() - used.len(),
            remaining: used.len(),
        });
    }
    let reports: Vec<FitReport<NonlinearParams>> = used.iter().map(|p| p.fit.clone()).collect();
    let n: Vec<f64> = used.iter().map(|p| p.photon_number).collect();
    let extraction = extract_kerr_two_photon(&reports, &n)?;
    Ok(KerrAnalysis {
        seed,
        powers,
        extraction,
    })
}
