//! Power-dependent two-level-system loss and its fit.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::constants::{BOLTZMANN, PLANCK};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fit_report::{Diagnostics, FitReport, ParamSet};
use crate::lm::{self, Bounds, LmOptions, LmOutcome};
use crate::model::TlsParams;

/// `tanh(h f_r / (2 k_B T))`.
pub fn thermal_factor(f_r: f64, temperature: f64) -> f64 {
    (PLANCK * f_r / (2.0 * BOLTZMANN * temperature)).tanh()
}

/// Internal loss `δ_i(n̄)` from the TLS model.
pub fn eval_tls_loss(t: &TlsParams, n: f64) -> f64 {
    t.inverse_q_tls() * thermal_factor(t.f_r, t.temperature) / (1.0 + n / t.n_c).powf(t.alpha_tls) + t.delta_0
}

/// TLS loss plus the two-photon contribution `γ_nl n̄ / f_r`.
pub fn eval_combined_loss(t: &TlsParams, two_photon: f64, n: f64) -> f64 {
    eval_tls_loss(t, n) + two_photon * n / t.f_r
}

/// One `(n̄, δ_i)` observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub photon_number: f64,
    pub internal_loss: f64,
}

/// Fitted TLS parameters; `two_photon` is zero when it was not fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsFit {
    pub tls: TlsParams,
    pub two_photon: f64,
    pub includes_two_photon: bool,
}

impl TlsFit {
    pub fn loss(&self, n: f64) -> f64 {
        eval_combined_loss(&self.tls, self.two_photon, n)
    }
}

impl ParamSet for TlsFit {
    fn names() -> &'static [&'static str] {
        &["inverse_q_tls", "n_c", "alpha_tls", "delta_0", "two_photon"]
    }

    fn values(&self) -> Vec<f64> {
        vec![
            self.tls.inverse_q_tls(),
            self.tls.n_c,
            self.tls.alpha_tls,
            self.tls.delta_0,
            self.two_photon,
        ]
    }
}

pub const MIN_POINTS: usize = 6;
pub const MIN_DECADES: f64 = 3.0;

/// Fits the TLS model to `(n̄, δ_i)` points in `log10(δ_i)`.
///
/// Free parameters are `1/Q_TLS >= 0`, `n_c > 0`, `alpha_tls ∈ (0, 2]`,
/// `δ_0 >= 0` and, with `include_two_photon`, `γ_nl >= 0`. A small grid of
/// starting points in `(n_c, alpha_tls)` is fitted and the lowest cost kept.
pub fn fit_tls(
    points: &[LossPoint],
    temperature: f64,
    f_r: f64,
    include_two_photon: bool,
) -> Result<FitReport<TlsFit>> {
    fit_tls_with(points, temperature, f_r, include_two_photon, Execution::default())
}

pub fn fit_tls_with(
    points: &[LossPoint],
    temperature: f64,
    f_r: f64,
    include_two_photon: bool,
    exec: Execution,
) -> Result<FitReport<TlsFit>> {
    if !(temperature > 0.0) || !(f_r > 0.0) {
        return Err(Error::param("temperature/f_r", "must be > 0"));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.photon_number > 0.0 && p.internal_loss > 0.0) || !p.photon_number.is_finite())
    {
        return Err(Error::param(
            "points",
            format!("photon number and loss must be positive, got {p:?}"),
        ));
    }
    let n_min = points.iter().map(|p| p.photon_number).fold(f64::INFINITY, f64::min);
    let n_max = points.iter().map(|p| p.photon_number).fold(0.0, f64::max);
    let decades = if points.is_empty() {
        0.0
    } else {
        (n_max / n_min).log10()
    };
    if points.len() < MIN_POINTS || decades < MIN_DECADES {
        return Err(Error::InsufficientSpan {
            points: points.len(),
            decades,
        });
    }

    let problem = Problem::new(points, temperature, f_r, include_two_photon);
    let starts = problem.starts();
    let outcomes: Vec<Option<LmOutcome>> = exec.map(&starts, |x0| {
        lm::minimize(
            |x| problem.residuals(x),
            x0,
            Some(&problem.bounds),
            &LmOptions::default(),
        )
        .ok()
    });
    let best = outcomes
        .into_iter()
        .flatten()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .ok_or(Error::NonConvergence { iterations: 0 })?;

    let cov = subset_covariance(&best.jacobian, best.cost, best.dof());
    let x = &best.x;
    let fit = problem.to_fit(x);
    let s = problem.scale;
    let mut std_errors = vec![
        s * cov[0],
        fit.tls.n_c * cov[1],
        cov[2],
        s * cov[3],
        if include_two_photon {
            cov[4] * s * f_r / n_max
        } else {
            f64::NAN
        },
    ];
    for e in &mut std_errors {
        if !e.is_finite() {
            *e = f64::NAN;
        }
    }

    let mut extras = BTreeMap::new();
    if fit.tls.q_tls.is_finite() {
        extras.insert("q_tls".into(), fit.tls.q_tls);
    }
    if fit.tls.delta_0 > 0.0 {
        extras.insert("q_0".into(), 1.0 / fit.tls.delta_0);
    }
    extras.insert("decades".into(), decades);
    extras.insert("thermal_factor".into(), problem.thermal);

    Ok(FitReport {
        params: fit,
        std_errors,
        residual_rms: (best.cost / points.len() as f64).sqrt(),
        n_points: points.len(),
        converged: best.converged,
        iterations: best.iterations,
        diagnostics: Diagnostics::default(),
        extras,
    })
}

/// Internal coordinates `[1/Q_TLS / s, ln n_c, alpha, δ_0 / s, γ n_max/(f_r s)]`
/// with `s` the median observed loss, so every coordinate is O(1).
struct Problem<'a> {
    points: &'a [LossPoint],
    temperature: f64,
    f_r: f64,
    thermal: f64,
    scale: f64,
    n_min: f64,
    n_max: f64,
    two_photon: bool,
    bounds: Bounds,
}

impl<'a> Problem<'a> {
    fn new(points: &'a [LossPoint], temperature: f64, f_r: f64, two_photon: bool) -> Self {
        let mut losses: Vec<f64> = points.iter().map(|p| p.internal_loss).collect();
        let scale = crate::linear_fit::median(&mut losses);
        let n_min = points.iter().map(|p| p.photon_number).fold(f64::INFINITY, f64::min);
        let n_max = points.iter().map(|p| p.photon_number).fold(0.0, f64::max);
        let dim = if two_photon { 5 } else { 4 };
        let ln_lo = (n_min * 1e-4).ln();
        let ln_hi = (n_max * 1e4).ln();
        let lower = [0.0, ln_lo, 1e-6, 0.0, 0.0];
        let upper = [f64::INFINITY, ln_hi, 2.0, f64::INFINITY, f64::INFINITY];
        Self {
            points,
            temperature,
            f_r,
            thermal: thermal_factor(f_r, temperature),
            scale,
            n_min,
            n_max,
            two_photon,
            bounds: Bounds {
                lower: lower[..dim].to_vec(),
                upper: upper[..dim].to_vec(),
            },
        }
    }

    fn loss(&self, x: &[f64], n: f64) -> f64 {
        let tls = x[0] * self.thermal / (1.0 + n / x[1].exp()).powf(x[2]);
        let tp = if self.two_photon { x[4] * n / self.n_max } else { 0.0 };
        self.scale * (tls + x[3] + tp)
    }

    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.points
            .iter()
            .map(|p| {
                let m = self.loss(x, p.photon_number);
                (m > 0.0 && m.is_finite()).then(|| m.log10() - p.internal_loss.log10())
            })
            .collect()
    }

    fn starts(&self) -> Vec<Vec<f64>> {
        let hi_loss = self
            .points
            .iter()
            .min_by(|a, b| a.photon_number.total_cmp(&b.photon_number))
            .map(|p| p.internal_loss)
            .unwrap_or(self.scale);
        let lo_loss = self
            .points
            .iter()
            .max_by(|a, b| a.photon_number.total_cmp(&b.photon_number))
            .map(|p| p.internal_loss)
            .unwrap_or(self.scale);
        let min_loss = self
            .points
            .iter()
            .map(|p| p.internal_loss)
            .fold(f64::INFINITY, f64::min);
        // a loss that rises again at high power seeds the two-photon term
        let rise = if self.two_photon {
            (lo_loss - min_loss) / self.scale
        } else {
            0.0
        };
        let floor = if rise > 0.0 { min_loss } else { lo_loss };
        let delta_0 = 0.9 * floor / self.scale;
        let lo_decade = (self.n_min.log10() - 1.0).floor() as i32;
        let hi_decade = self.n_max.log10().ceil() as i32;
        let mut starts = Vec::new();
        for d in lo_decade..=hi_decade {
            let n_c = 10f64.powi(d);
            for alpha in [0.3, 0.6, 1.0] {
                let excess = ((hi_loss - 0.9 * floor) / self.scale).max(1e-3);
                let a = excess * (1.0 + self.n_min / n_c).powf(alpha) / self.thermal;
                let mut x = vec![a, n_c.ln(), alpha, delta_0];
                if self.two_photon {
                    x.push(0.0);
                    if rise > 0.0 {
                        let mut seeded = x.clone();
                        seeded[4] = rise;
                        starts.push(seeded);
                    }
                }
                starts.push(x);
            }
        }
        starts
    }

    fn to_fit(&self, x: &[f64]) -> TlsFit {
        let inv_q = x[0] * self.scale;
        TlsFit {
            tls: TlsParams {
                q_tls: 1.0 / inv_q,
                n_c: x[1].exp(),
                alpha_tls: x[2],
                delta_0: x[3] * self.scale,
                temperature: self.temperature,
                f_r: self.f_r,
            },
            two_photon: if self.two_photon {
                x[4] * self.scale * self.f_r / self.n_max
            } else {
                0.0
            },
            includes_two_photon: self.two_photon,
        }
    }
}

/// Standard deviations of the internal coordinates. Coordinates that no
/// longer influence the residuals (e.g. `n_c` once `1/Q_TLS` hits zero) get
/// NaN and are left out of the inversion.
fn subset_covariance(jac: &DMatrix<f64>, cost: f64, dof: usize) -> Vec<f64> {
    let n = jac.ncols();
    let norms: Vec<f64> = (0..n).map(|j| jac.column(j).norm()).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&j| norms[j] > 1e-7 * max).collect();
    let mut out = vec![f64::NAN; n];
    if keep.is_empty() {
        return out;
    }
    let sub = DMatrix::from_fn(jac.nrows(), keep.len(), |i, k| jac[(i, keep[k])]);
    if let Ok(cov) = lm::covariance(&sub, cost, dof) {
        for (k, &j) in keep.iter().enumerate() {
            out[j] = cov[(k, k)].max(0.0).sqrt();
        }
    }
    out
}
