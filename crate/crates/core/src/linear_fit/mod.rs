//! Fitting the linear line shape to a measured trace.

mod estimate;
mod segment;

pub use estimate::estimate_initial;
pub use segment::{segment_resonances, ResonanceWindow};

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fit_report::{Diagnostics, FitReport};
use crate::lm::{self, LmOptions};
use crate::model::{self, resonator_factor, FrequencyTrace, LinearParams};

/// Minimum number of points accepted by [`fit_linear`].
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Default)]
pub struct LinearFitOptions {
    pub lm: LmOptions,
}

/// Fits the seven linear parameters by damped least squares on stacked
/// real/imaginary residuals. `guess` defaults to [`estimate_initial`].
pub fn fit_linear(trace: &FrequencyTrace, guess: Option<LinearParams>) -> Result<FitReport<LinearParams>> {
    fit_linear_with(trace, guess, &LinearFitOptions::default())
}

/// The part of `trace` within `±linewidths` loaded linewidths of the dip,
/// located with [`estimate_initial`]. The whole trace is returned when the
/// window would hold fewer than [`MIN_FIT_POINTS`] points.
pub fn window_around_dip(trace: &FrequencyTrace, linewidths: f64) -> Result<FrequencyTrace> {
    if !(linewidths > 0.0) {
        return Err(Error::param("linewidths", format!("must be > 0, got {linewidths}")));
    }
    let guess = estimate_initial(trace)?;
    let half = linewidths * model::loaded_linewidth(&guess);
    let freqs = trace.freqs();
    let start = freqs.partition_point(|&f| f < guess.resonant_freq - half);
    let end = freqs.partition_point(|&f| f <= guess.resonant_freq + half);
    if end - start < MIN_FIT_POINTS {
        return Ok(trace.clone());
    }
    trace.slice(start, end)
}

pub fn fit_linear_with(
    trace: &FrequencyTrace,
    guess: Option<LinearParams>,
    opts: &LinearFitOptions,
) -> Result<FitReport<LinearParams>> {
    if trace.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            got: trace.len(),
        });
    }
    let guess = match guess {
        Some(g) => {
            g.validate()?;
            g
        }
        None => estimate_initial(trace)?,
    };
    let frame = LinearFrame::new(trace, &guess);
    let x0 = frame.to_internal(&guess);
    let freqs = trace.freqs();
    let data = trace.s21();
    let residual = |x: &[f64]| frame.residuals(x, freqs, data);
    let out = lm::minimize(residual, &x0, None, &opts.lm)?;
    let cov = out.covariance()?;
    let std_errors = lm::propagate_std_errors(&out.x, &cov, |x| frame.to_physical_offsets(x));
    let params = frame.to_physical(&out.x);
    let in_domain = params.validate().is_ok();

    let residual_rms = (out.cost / trace.len() as f64).sqrt();
    let noise = baseline_stats(trace);
    let depth = dip_depth(trace, &noise);
    let mut diagnostics = Diagnostics {
        low_snr: depth < 10.0 * noise.sigma,
        ..Diagnostics::default()
    };
    diagnostics.nonlinear_suspected =
        residual_rms > 3.0 * std::f64::consts::SQRT_2 * noise.sigma && residual_rms > 1e-9 * params.amplitude;

    let mut extras = BTreeMap::new();
    extras.insert("q_internal".into(), params.q_internal());
    extras.insert("q_coupling".into(), params.q_coupling());
    if let Ok(raw) = model::raw_qc(&params) {
        extras.insert("q_coupling_raw".into(), raw);
    }
    extras.insert("loaded_linewidth_hz".into(), model::loaded_linewidth(&params));
    extras.insert("noise_sigma".into(), noise.sigma);
    extras.insert(
        "q_internal_err".into(),
        std_errors[5] / (params.internal_loss * params.internal_loss),
    );

    Ok(FitReport {
        params,
        std_errors,
        residual_rms,
        n_points: trace.len(),
        converged: out.converged && in_domain,
        iterations: out.iterations,
        diagnostics,
        extras,
    })
}

/// Internal coordinates of the linear fit. Frequencies are referenced to the
/// guess so the delay and phase decouple, and losses are fitted in log space.
///
/// `x = [ln A, 2π·span·t_d, φ_ref, α_f, (f_r - f_ref)/w, ln δ_i, ln δ_c]`
/// where `φ_ref` is the environment phase at `f_ref` and `w` the guessed
/// linewidth.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearFrame {
    pub f_ref: f64,
    pub width: f64,
    pub span: f64,
}

impl LinearFrame {
    pub fn new(trace: &FrequencyTrace, guess: &LinearParams) -> Self {
        let f = trace.freqs();
        let span = (f[f.len() - 1] - f[0]).max(f64::MIN_POSITIVE);
        Self {
            f_ref: guess.resonant_freq,
            width: model::loaded_linewidth(guess),
            span,
        }
    }

    pub fn to_internal(self, p: &LinearParams) -> Vec<f64> {
        vec![
            p.amplitude.ln(),
            2.0 * PI * self.span * p.electric_delay,
            p.phase_offset + 2.0 * PI * self.f_ref * p.electric_delay,
            p.fano_asymmetry,
            (p.resonant_freq - self.f_ref) / self.width,
            p.internal_loss.ln(),
            p.coupling_loss.ln(),
        ]
    }

    pub fn delay(&self, x: &[f64]) -> f64 {
        x[1] / (2.0 * PI * self.span)
    }

    pub fn to_physical(self, x: &[f64]) -> LinearParams {
        let t_d = self.delay(x);
        LinearParams {
            amplitude: x[0].exp(),
            electric_delay: t_d,
            phase_offset: model::wrap_phase(x[2] - 2.0 * PI * self.f_ref * t_d),
            fano_asymmetry: x[3],
            resonant_freq: self.f_ref + self.width * x[4],
            internal_loss: x[5].exp(),
            coupling_loss: x[6].exp(),
        }
    }

    /// Physical values (unwrapped phase, resonance offset from `f_ref`) for
    /// error propagation; same std errors as the physical parameters.
    pub fn to_physical_offsets(self, x: &[f64]) -> Vec<f64> {
        let t_d = self.delay(x);
        vec![
            x[0].exp(),
            t_d,
            x[2] - 2.0 * PI * self.f_ref * t_d,
            x[3],
            self.width * x[4],
            x[5].exp(),
            x[6].exp(),
        ]
    }

    pub fn in_domain(x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite()) && x[3].abs() < FRAC_PI_2 && x[5] < 0.0 && x[6] < 0.0
    }

    /// Environment and line-shape pieces at one point: returns
    /// `(env, diameter, Δ̃)`.
    #[inline]
    pub fn point(&self, x: &[f64], f: f64) -> (Complex64, f64, f64) {
        let df = f - self.f_ref;
        let t_d = self.delay(x);
        let env = Complex64::from_polar(x[0].exp(), 2.0 * PI * df * t_d + x[2]);
        let di = x[5].exp();
        let dc = x[6].exp();
        let total = di + dc;
        let f_r = self.f_ref + self.width * x[4];
        let detuning = (df - self.width * x[4]) / (f_r * total);
        (env, dc / total, detuning)
    }

    pub fn residuals(&self, x: &[f64], freqs: &[f64], data: &[Complex64]) -> Option<Vec<f64>> {
        if !Self::in_domain(x) {
            return None;
        }
        let mut out = Vec::with_capacity(2 * freqs.len());
        for (&f, z) in freqs.iter().zip(data) {
            let (env, d, detuning) = self.point(x, f);
            let m = env * resonator_factor(d, x[3], 1.0, detuning);
            out.push(m.re - z.re);
            out.push(m.im - z.im);
        }
        Some(out)
    }
}

/// Off-resonant baseline statistics from the outer 20% of the window.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BaselineStats {
    pub median: f64,
    /// Noise scale from the median absolute deviation of `|S21|`.
    pub sigma: f64,
}

pub(crate) fn outer_indices(n: usize) -> Vec<usize> {
    let k = ((n as f64 * 0.1).round() as usize).max(2).min(n / 2);
    (0..k).chain(n - k..n).collect()
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median and scaled MAD.
pub(crate) fn robust_location_scale(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    (med, 1.4826 * median(&mut dev))
}

pub(crate) fn baseline_stats(trace: &FrequencyTrace) -> BaselineStats {
    let s = trace.s21();
    let mags: Vec<f64> = outer_indices(s.len()).into_iter().map(|i| s[i].norm()).collect();
    let (median, sigma) = robust_location_scale(&mags);
    BaselineStats { median, sigma }
}

pub(crate) fn dip_depth(trace: &FrequencyTrace, base: &BaselineStats) -> f64 {
    let min = trace.s21().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    base.median - min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TraceMeta;
    use crate::synth;

    fn params() -> LinearParams {
        LinearParams {
            amplitude: 0.8,
            electric_delay: 40e-9,
            phase_offset: 0.7,
            fano_asymmetry: 0.2,
            resonant_freq: 5e9,
            internal_loss: 1.0 / 2e6,
            coupling_loss: 1.0 / 1e6,
        }
    }

    fn grid(p: &LinearParams, linewidths: f64, n: usize) -> Vec<f64> {
        let lw = model::loaded_linewidth(p);
        let lo = p.resonant_freq - 0.5 * linewidths * lw;
        (0..n)
            .map(|i| lo + linewidths * lw * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn frame_round_trip() {
        let p = params();
        let trace = synth::synthesize_linear(&p, &grid(&p, 10.0, 101), 0.0, 1, TraceMeta::default()).unwrap();
        let frame = LinearFrame::new(&trace, &p);
        let back = frame.to_physical(&frame.to_internal(&p));
        assert!((back.electric_delay - p.electric_delay).abs() < 1e-20);
        assert!((back.phase_offset - p.phase_offset).abs() < 1e-9);
        assert!((back.resonant_freq - p.resonant_freq).abs() < 1e-9);
        assert!((back.internal_loss / p.internal_loss - 1.0).abs() < 1e-14);
    }

    #[test]
    fn noise_free_fit_is_exact() {
        let p = params();
        let trace = synth::synthesize_linear(&p, &grid(&p, 10.0, 401), 0.0, 1, TraceMeta::default()).unwrap();
        let rep = fit_linear(&trace, None).unwrap();
        assert!(rep.converged);
        let q = rep.params;
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(q.amplitude, p.amplitude) < 1e-6);
        assert!(
            rel(q.electric_delay, p.electric_delay) < 1e-6,
            "{} vs {}",
            q.electric_delay,
            p.electric_delay
        );
        assert!((q.phase_offset - p.phase_offset).abs() < 1e-6);
        assert!((q.fano_asymmetry - p.fano_asymmetry).abs() < 1e-6);
        assert!(rel(q.resonant_freq, p.resonant_freq) < 1e-6);
        assert!(rel(q.internal_loss, p.internal_loss) < 1e-6);
        assert!(rel(q.coupling_loss, p.coupling_loss) < 1e-6);
        assert!(!rep.diagnostics.nonlinear_suspected);
    }

    #[test]
    fn noisy_fit_meets_tolerance() {
        let p = LinearParams {
            electric_delay: 0.0,
            phase_offset: 0.0,
            ..params()
        };
        let lw = model::loaded_linewidth(&p);
        let trace = synth::synthesize_linear(&p, &grid(&p, 10.0, 401), 0.01, 42, TraceMeta::default()).unwrap();
        let rep = fit_linear(&trace, None).unwrap();
        assert!(rep.converged);
        assert!((rep.params.q_internal() / p.q_internal() - 1.0).abs() < 0.03);
        assert!((rep.params.resonant_freq - p.resonant_freq).abs() < 0.1 * lw);
        assert!(rep.std_errors.iter().all(|e| *e >= 0.0 && e.is_finite()));
        assert!(!rep.diagnostics.low_snr);
    }

    #[test]
    fn too_few_points() {
        let p = params();
        let trace = synth::synthesize_linear(&p, &grid(&p, 10.0, 5), 0.0, 1, TraceMeta::default()).unwrap();
        assert!(matches!(
            fit_linear(&trace, Some(p)),
            Err(Error::InsufficientPoints { needed: 10, got: 5 })
        ));
    }

    #[test]
    fn constant_trace_with_remote_guess_is_singular() {
        let freqs: Vec<f64> = (0..50).map(|i| 5e9 + i as f64 * 100.0).collect();
        let s21 = vec![Complex64::new(0.5, 0.5); 50];
        let trace = FrequencyTrace::new(freqs, s21, TraceMeta::default()).unwrap();
        let guess = LinearParams {
            resonant_freq: 7e9,
            internal_loss: 1e-7,
            coupling_loss: 1e-9,
            ..params()
        };
        assert!(matches!(fit_linear(&trace, Some(guess)), Err(Error::SingularJacobian)));
    }

    #[test]
    fn median_and_mad() {
        let (m, s) = robust_location_scale(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(m, 3.0);
        assert!((s - 1.4826).abs() < 1e-12);
        assert_eq!(outer_indices(20), vec![0, 1, 18, 19]);
    }
    #[test]
    fn window_keeps_the_dip() {
        let p = params();
        let trace = synth::synthesize_linear(&p, &grid(&p, 100.0, 2001), 0.0, 1, TraceMeta::default()).unwrap();
        let w = window_around_dip(&trace, 10.0).unwrap();
        let lw = model::loaded_linewidth(&p);
        assert!(w.len() < trace.len() / 2, "{}", w.len());
        assert!(w.freqs()[0] < p.resonant_freq - 5.0 * lw);
        assert!(w.freqs()[w.len() - 1] > p.resonant_freq + 5.0 * lw);
        let narrow = window_around_dip(&trace, 0.01).unwrap();
        assert_eq!(narrow.len(), trace.len());
    }
}
