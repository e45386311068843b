//! Synthetic traces and power sweeps with known ground truth.
//!
//! Noise is IID complex Gaussian with equal per-quadrature standard deviation
//! `noise_sigma · A`. The generator is ChaCha8 seeded with
//! `seed_from_u64(seed)`; trace `k` of a sweep uses stream `k` and single
//! traces use stream 0. Each point draws the real part, then the imaginary
//! part, from `StandardNormal`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::{input_photon_flux, mean_photon_number, DriveCalibration};
use crate::duffing::{eval_nonlinear_detailed, BranchPolicy};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{
    eval_linear_s21, resonator_factor, FrequencyTrace, LinearParams, NonlinearParams, TlsParams, TraceMeta,
};
use crate::tls::eval_tls_loss;

fn check_sigma(noise_sigma: f64) -> Result<()> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::param(
            "noise_sigma",
            format!("must be finite and >= 0, got {noise_sigma}"),
        ));
    }
    Ok(())
}

fn add_noise(mut s21: Vec<Complex64>, sigma: f64, seed: u64, stream: u64) -> Vec<Complex64> {
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        for z in &mut s21 {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += Complex64::new(sigma * re, sigma * im);
        }
    }
    s21
}

/// Linear line shape plus complex Gaussian noise.
pub fn synthesize_linear(
    p: &LinearParams,
    freqs: &[f64],
    noise_sigma: f64,
    seed: u64,
    meta: TraceMeta,
) -> Result<FrequencyTrace> {
    check_sigma(noise_sigma)?;
    let clean = eval_linear_s21(p, freqs)?;
    let s21 = add_noise(clean, noise_sigma * p.amplitude, seed, 0);
    FrequencyTrace::new(freqs.to_vec(), s21, meta)
}

/// Nonlinear line shape under `policy` plus complex Gaussian noise.
pub fn synthesize_nonlinear(
    p: &NonlinearParams,
    freqs: &[f64],
    policy: BranchPolicy,
    noise_sigma: f64,
    seed: u64,
    meta: TraceMeta,
) -> Result<FrequencyTrace> {
    synthesize_nonlinear_stream(p, freqs, policy, noise_sigma, seed, 0, meta)
}

fn synthesize_nonlinear_stream(
    p: &NonlinearParams,
    freqs: &[f64],
    policy: BranchPolicy,
    noise_sigma: f64,
    seed: u64,
    stream: u64,
    meta: TraceMeta,
) -> Result<FrequencyTrace> {
    check_sigma(noise_sigma)?;
    let (clean, _) = eval_nonlinear_detailed(p, freqs, policy, Execution::Sequential)?;
    let s21 = add_noise(clean, noise_sigma * p.linear.amplitude, seed, stream);
    FrequencyTrace::new(freqs.to_vec(), s21, meta)
}

/// Several linear resonators on one feedline: a shared environment times
/// the product of the resonator factors. Only the resonator fields of each
/// entry in `resonators` are used (amplitude, delay and phase are ignored).
#[allow(clippy::too_many_arguments)]
pub fn synthesize_wideband(
    amplitude: f64,
    electric_delay: f64,
    phase_offset: f64,
    resonators: &[LinearParams],
    freqs: &[f64],
    noise_sigma: f64,
    seed: u64,
    meta: TraceMeta,
) -> Result<FrequencyTrace> {
    check_sigma(noise_sigma)?;
    for r in resonators {
        LinearParams {
            amplitude,
            electric_delay,
            phase_offset,
            ..*r
        }
        .validate()?;
    }
    let clean: Vec<Complex64> = freqs
        .iter()
        .map(|&f| {
            let env = Complex64::from_polar(amplitude, 2.0 * PI * f * electric_delay + phase_offset);
            resonators.iter().fold(env, |acc, r| {
                acc * resonator_factor(r.diameter(), r.fano_asymmetry, 1.0, r.normalized_detuning(f))
            })
        })
        .collect();
    let s21 = add_noise(clean, noise_sigma * amplitude, seed, 0);
    FrequencyTrace::new(freqs.to_vec(), s21, meta)
}

/// Generator settings for a synthetic power sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweepSpec {
    /// Environment, resonance frequency, asymmetry and coupling; its
    /// `internal_loss` is replaced per power by the TLS model.
    pub linear: LinearParams,
    pub tls: TlsParams,
    pub kerr: f64,
    pub two_photon: f64,
    /// Instrument powers in dBm, ascending.
    pub instrument_powers: Vec<f64>,
    pub attenuation_db: f64,
    pub freqs: Vec<f64>,
    pub noise_sigma: f64,
    pub policy: BranchPolicy,
    pub seed: u64,
    pub label: String,
}

/// Ground truth behind one synthetic sweep trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPointTruth {
    pub instrument_power_dbm: f64,
    /// On-chip power, W.
    pub input_power: f64,
    /// Mean photon number from the calibration formula at `internal_loss`.
    pub photon_number: f64,
    pub internal_loss: f64,
    pub params: NonlinearParams,
}

#[derive(Debug, Clone)]
pub struct PowerSweep {
    pub traces: Vec<FrequencyTrace>,
    pub truth: Vec<SweepPointTruth>,
}

/// Solves `n̄ = n̄(P_in, δ_i(n̄))` for the power-dependent internal loss.
///
/// The map `n ↦ n̄(P_in, δ_i(n))` is increasing and bounded, so iterating it
/// from `n = 0` converges monotonically to the smallest fixed point.
pub fn self_consistent_loss(linear: &LinearParams, tls: &TlsParams, p_in: f64) -> (f64, f64) {
    let mut n = 0.0;
    let mut delta_i = eval_tls_loss(tls, n);
    for _ in 0..500 {
        let lin = LinearParams {
            internal_loss: delta_i,
            ..*linear
        };
        let next = mean_photon_number(p_in, &lin);
        let converged = (next - n).abs() <= 1e-14 * next;
        n = next;
        delta_i = eval_tls_loss(tls, n);
        if converged {
            break;
        }
    }
    (n, delta_i)
}

/// Synthesizes one nonlinear trace per instrument power.
///
/// Per power the on-chip power follows from the attenuation, the internal
/// loss from the TLS model at the self-consistent mean photon number, and the
/// drive flux from `P_in / (h f_r)`. Traces are generated in parallel.
pub fn synthesize_power_sweep(spec: &PowerSweepSpec) -> Result<PowerSweep> {
    synthesize_power_sweep_with(spec, Execution::default())
}

pub fn synthesize_power_sweep_with(spec: &PowerSweepSpec, exec: Execution) -> Result<PowerSweep> {
    check_sigma(spec.noise_sigma)?;
    spec.tls.validate()?;
    spec.linear.validate()?;
    if spec.instrument_powers.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("instrument_powers", "must be strictly ascending"));
    }
    if !(spec.two_photon >= 0.0) {
        return Err(Error::param("two_photon", "must be >= 0"));
    }
    let results = exec.map_range(spec.instrument_powers.len(), |k| {
        let power = spec.instrument_powers[k];
        let cal = DriveCalibration::new(spec.attenuation_db, power)?;
        let p_in = cal.on_chip_power();
        let (n, delta_i) = self_consistent_loss(&spec.linear, &spec.tls, p_in);
        let params = NonlinearParams {
            linear: LinearParams {
                internal_loss: delta_i,
                ..spec.linear
            },
            kerr: spec.kerr,
            two_photon: spec.two_photon,
            drive_flux: input_photon_flux(p_in, spec.linear.resonant_freq),
        };
        let meta = TraceMeta {
            instrument_power_dbm: power,
            attenuation_db: spec.attenuation_db,
            temperature_k: spec.tls.temperature,
            label: spec.label.clone(),
        };
        let trace = synthesize_nonlinear_stream(
            &params,
            &spec.freqs,
            spec.policy,
            spec.noise_sigma,
            spec.seed,
            k as u64,
            meta,
        )?;
        Ok((
            trace,
            SweepPointTruth {
                instrument_power_dbm: power,
                input_power: p_in,
                photon_number: n,
                internal_loss: delta_i,
                params,
            },
        ))
    });
    let (traces, truth) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(PowerSweep { traces, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::loaded_linewidth;

    fn lin() -> LinearParams {
        LinearParams {
            amplitude: 0.5,
            electric_delay: 20e-9,
            phase_offset: 0.3,
            fano_asymmetry: 0.1,
            resonant_freq: 5e9,
            internal_loss: 1e-6,
            coupling_loss: 2e-6,
        }
    }

    fn grid(p: &LinearParams, n: usize) -> Vec<f64> {
        let lw = loaded_linewidth(p);
        (0..n)
            .map(|i| p.resonant_freq + (i as f64 / (n - 1) as f64 - 0.5) * 10.0 * lw)
            .collect()
    }

    #[test]
    fn zero_noise_is_the_model() {
        let p = lin();
        let f = grid(&p, 101);
        let t = synthesize_linear(&p, &f, 0.0, 7, TraceMeta::default()).unwrap();
        assert_eq!(t.s21(), eval_linear_s21(&p, &f).unwrap().as_slice());
    }

    #[test]
    fn deterministic_per_seed() {
        let p = lin();
        let f = grid(&p, 101);
        let a = synthesize_linear(&p, &f, 0.01, 42, TraceMeta::default()).unwrap();
        let b = synthesize_linear(&p, &f, 0.01, 42, TraceMeta::default()).unwrap();
        let c = synthesize_linear(&p, &f, 0.01, 43, TraceMeta::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_level() {
        let p = lin();
        let f = grid(&p, 401);
        let t = synthesize_linear(&p, &f, 0.01, 3, TraceMeta::default()).unwrap();
        let clean = eval_linear_s21(&p, &f).unwrap();
        let r: Vec<f64> = t
            .s21()
            .iter()
            .zip(&clean)
            .flat_map(|(a, b)| [(a - b).re, (a - b).im])
            .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        assert!((sd / (0.01 * p.amplitude) - 1.0).abs() < 0.1, "{sd}");
    }

    #[test]
    fn nonlinear_limit_matches_linear() {
        let p = lin();
        let f = grid(&p, 101);
        let a = synthesize_linear(&p, &f, 0.02, 9, TraceMeta::default()).unwrap();
        let b = synthesize_nonlinear(
            &NonlinearParams::from_linear(p),
            &f,
            BranchPolicy::SweepDown,
            0.02,
            9,
            TraceMeta::default(),
        )
        .unwrap();
        for (x, y) in a.s21().iter().zip(b.s21()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn wideband_single_equals_linear() {
        let p = lin();
        let f = grid(&p, 51);
        let a = synthesize_linear(&p, &f, 0.0, 0, TraceMeta::default()).unwrap();
        let b = synthesize_wideband(
            p.amplitude,
            p.electric_delay,
            p.phase_offset,
            &[p],
            &f,
            0.0,
            0,
            TraceMeta::default(),
        )
        .unwrap();
        for (x, y) in a.s21().iter().zip(b.s21()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    fn sweep_spec(powers: Vec<f64>) -> PowerSweepSpec {
        let linear = lin();
        PowerSweepSpec {
            linear,
            tls: TlsParams {
                q_tls: 4e6,
                n_c: 10.0,
                alpha_tls: 0.5,
                delta_0: 2e-7,
                temperature: 0.01,
                f_r: linear.resonant_freq,
            },
            kerr: 0.0,
            two_photon: 0.0,
            instrument_powers: powers,
            attenuation_db: 74.0,
            freqs: grid(&linear, 201),
            noise_sigma: 0.0,
            policy: BranchPolicy::SweepUp,
            seed: 1,
            label: "r1".into(),
        }
    }

    #[test]
    fn sweep_is_self_consistent_and_saturates() {
        let spec = sweep_spec(vec![-80.0, -60.0, -40.0, -20.0, 0.0, 20.0]);
        let sweep = synthesize_power_sweep(&spec).unwrap();
        assert_eq!(sweep.traces.len(), 6);
        for t in &sweep.truth {
            let lin = LinearParams {
                internal_loss: t.internal_loss,
                ..spec.linear
            };
            let n = mean_photon_number(t.input_power, &lin);
            assert!((n / t.photon_number - 1.0).abs() < 1e-12);
            assert!((eval_tls_loss(&spec.tls, n) / t.internal_loss - 1.0).abs() < 1e-12);
        }
        assert!(sweep.truth.windows(2).all(|w| w[1].internal_loss < w[0].internal_loss));
        let last = sweep.truth.last().unwrap();
        assert!((last.internal_loss - spec.tls.delta_0) / spec.tls.delta_0 < 0.05);
        assert_eq!(sweep.traces[2].meta.instrument_power_dbm, -40.0);
        assert_eq!(sweep.traces[2].meta.attenuation_db, 74.0);
    }

    #[test]
    fn single_power_matches_direct_synthesis() {
        let spec = sweep_spec(vec![-50.0]);
        let sweep = synthesize_power_sweep(&spec).unwrap();
        let direct = synthesize_nonlinear(
            &sweep.truth[0].params,
            &spec.freqs,
            spec.policy,
            0.0,
            spec.seed,
            TraceMeta::default(),
        )
        .unwrap();
        assert_eq!(sweep.traces[0].s21(), direct.s21());
    }

    #[test]
    fn sweep_is_deterministic_and_execution_independent() {
        let mut spec = sweep_spec(vec![-70.0, -50.0, -30.0]);
        spec.noise_sigma = 0.01;
        let a = synthesize_power_sweep_with(&spec, Execution::Parallel).unwrap();
        let b = synthesize_power_sweep_with(&spec, Execution::Sequential).unwrap();
        assert_eq!(a.traces, b.traces);
    }
}
